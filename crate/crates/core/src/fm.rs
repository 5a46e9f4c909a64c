//! Second-order factorization machine regression.
//!
//! The model is
//!
//! ```text
//! y(x) = w0 + sum_i w_i x_i + sum_{i<j} <v_i, v_j> x_i x_j
//! ```
//!
//! with one latent row `v_i` of width `k` per feature. The pairwise sum is
//! evaluated in `O(k * nnz(x))` through
//!
//! ```text
//! sum_{i<j} <v_i, v_j> x_i x_j = 1/2 sum_l [ (sum_i v_il x_i)^2 - sum_i v_il^2 x_i^2 ]
//! ```
//!
//! [`FMModel::predict_naive`] keeps the explicit double loop as a reference.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::EncodedMatrix;
use crate::{rng, Error, Result};

pub const MODEL_FILE_VERSION: u32 = 1;

/// Serializes as the versioned model file `{version, w0, w, V}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ModelFile", try_from = "ModelFile")]
pub struct FMModel {
    w0: f64,
    w: Vec<f64>,
    /// d×k, row-major.
    v: Vec<f64>,
    k: usize,
}

impl FMModel {
    pub fn new(w0: f64, w: Vec<f64>, v: Vec<Vec<f64>>) -> Result<Self> {
        let d = w.len();
        if v.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: v.len(),
            });
        }
        let k = v.first().map_or(0, Vec::len);
        if d > 0 && k == 0 {
            return Err(Error::invalid("latent dimension k must be >= 1"));
        }
        if let Some(row) = v.iter().find(|r| r.len() != k) {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: row.len(),
            });
        }
        let model = FMModel {
            w0,
            w,
            v: v.into_iter().flatten().collect(),
            k: k.max(1),
        };
        if !model.is_finite() {
            return Err(Error::invalid("model contains non-finite parameters"));
        }
        Ok(model)
    }

    pub fn zeros(d: usize, k: usize) -> Self {
        assert!(k >= 1, "k must be >= 1");
        FMModel {
            w0: 0.0,
            w: vec![0.0; d],
            v: vec![0.0; d * k],
            k,
        }
    }

    pub fn d(&self) -> usize {
        self.w.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn w0(&self) -> f64 {
        self.w0
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn v_row(&self, i: usize) -> &[f64] {
        &self.v[i * self.k..(i + 1) * self.k]
    }

    pub fn v_rows(&self) -> Vec<Vec<f64>> {
        self.v.chunks(self.k).map(<[f64]>::to_vec).collect()
    }

    pub fn set_w0(&mut self, w0: f64) {
        self.w0 = w0;
    }

    pub fn w_mut(&mut self) -> &mut [f64] {
        &mut self.w
    }

    pub fn v_row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.v[i * self.k..(i + 1) * self.k]
    }

    fn is_finite(&self) -> bool {
        self.w0.is_finite()
            && self.w.iter().all(|x| x.is_finite())
            && self.v.iter().all(|x| x.is_finite())
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn dot(&self, i: usize, j: usize) -> f64 {
        self.v_row(i)
            .iter()
            .zip(self.v_row(j))
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Reference predictor with the explicit O(k d²) pair loop.
    pub fn predict_naive(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let d = self.d();
        let mut y = self.w0;
        for i in 0..d {
            y += self.w[i] * x[i];
        }
        for i in 0..d {
            for j in (i + 1)..d {
                y += self.dot(i, j) * x[i] * x[j];
            }
        }
        Ok(y)
    }

    /// Linear-time predictor; zero coordinates of `x` are skipped.
    pub fn predict_fast(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let nz = x.iter().copied().enumerate().filter(|&(_, xi)| xi != 0.0);
        let linear: f64 = nz.clone().map(|(i, xi)| self.w[i] * xi).sum();
        let pair = pairwise_term(self.k, nz, |i, l| self.v[i * self.k + l]);
        Ok(self.w0 + linear + pair)
    }

    /// Prediction for a binary row given by its set column indices.
    pub fn predict_active(&self, active: &[usize]) -> f64 {
        let linear: f64 = active.iter().map(|&i| self.w[i]).sum();
        let pair = pairwise_term(self.k, active.iter().map(|&i| (i, 1.0)), |i, l| {
            self.v[i * self.k + l]
        });
        self.w0 + linear + pair
    }

    /// Gradient of `1/2 (y_hat - y)^2 + l2_w/2 |w|^2 + l2_v/2 |V|^2`.
    pub fn gradient(&self, x: &[f64], y: f64, l2_w: f64, l2_v: f64) -> Result<FMGradient> {
        self.check_dim(x)?;
        let k = self.k;
        let residual = self.predict_fast(x)? - y;
        let mut sums = vec![0.0; k];
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                for (s, v) in sums.iter_mut().zip(self.v_row(i)) {
                    *s += v * xi;
                }
            }
        }
        let w: Vec<f64> = x
            .iter()
            .zip(&self.w)
            .map(|(&xi, &wi)| residual * xi + l2_w * wi)
            .collect();
        let mut v = vec![0.0; self.v.len()];
        for (i, &xi) in x.iter().enumerate() {
            for l in 0..k {
                let vil = self.v[i * k + l];
                let dy = xi * sums[l] - vil * xi * xi;
                v[i * k + l] = residual * dy + l2_v * vil;
            }
        }
        Ok(FMGradient {
            w0: residual,
            w,
            v,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let version = value
            .get("version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::Serialization("model file has no version".into()))?;
        if version != u64::from(MODEL_FILE_VERSION) {
            return Err(Error::VersionMismatch {
                expected: MODEL_FILE_VERSION,
                found: u32::try_from(version).unwrap_or(u32::MAX),
            });
        }
        let file: ModelFile = serde_json::from_value(value)?;
        FMModel::try_from(file)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    version: u32,
    w0: f64,
    w: Vec<f64>,
    #[serde(rename = "V")]
    v: Vec<Vec<f64>>,
}

impl From<FMModel> for ModelFile {
    fn from(m: FMModel) -> Self {
        ModelFile {
            version: MODEL_FILE_VERSION,
            w0: m.w0,
            v: m.v_rows(),
            w: m.w,
        }
    }
}

impl TryFrom<ModelFile> for FMModel {
    type Error = Error;

    fn try_from(file: ModelFile) -> Result<Self> {
        if file.version != MODEL_FILE_VERSION {
            return Err(Error::VersionMismatch {
                expected: MODEL_FILE_VERSION,
                found: file.version,
            });
        }
        FMModel::new(file.w0, file.w, file.v)
    }
}

/// `1/2 sum_l [(sum_i v_il x_i)^2 - sum_i v_il^2 x_i^2]` over the nonzero
/// coordinates `nz`. `v_at(i, l)` is read once per (feature, factor) pair.
fn pairwise_term(
    k: usize,
    nz: impl Iterator<Item = (usize, f64)>,
    mut v_at: impl FnMut(usize, usize) -> f64,
) -> f64 {
    let mut sum = vec![0.0; k];
    let mut sum_sq = vec![0.0; k];
    for (i, xi) in nz {
        for l in 0..k {
            let t = v_at(i, l) * xi;
            sum[l] += t;
            sum_sq[l] += t * t;
        }
    }
    0.5 * sum
        .iter()
        .zip(&sum_sq)
        .map(|(s, q)| s * s - q)
        .sum::<f64>()
}

/// Gradient laid out like [`FMModel`]: `v` is d×k row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FMGradient {
    pub w0: f64,
    pub w: Vec<f64>,
    pub v: Vec<f64>,
}

/// Objective whose gradient [`FMModel::gradient`] returns.
pub fn penalized_squared_loss(model: &FMModel, x: &[f64], y: f64, l2_w: f64, l2_v: f64) -> Result<f64> {
    let r = model.predict_fast(x)? - y;
    let w2: f64 = model.w.iter().map(|w| w * w).sum();
    let v2: f64 = model.v.iter().map(|v| v * v).sum();
    Ok(0.5 * r * r + 0.5 * l2_w * w2 + 0.5 * l2_v * v2)
}

fn default_k() -> usize {
    8
}
fn default_learning_rate() -> f64 {
    0.01
}
fn default_epochs() -> usize {
    50
}
fn default_init_sigma() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FMTrainConfig {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    pub seed: u64,
    #[serde(default = "default_init_sigma")]
    pub init_sigma: f64,
    #[serde(default)]
    pub l2_w: f64,
    #[serde(default)]
    pub l2_v: f64,
}

impl FMTrainConfig {
    pub fn new(seed: u64) -> Self {
        FMTrainConfig {
            k: default_k(),
            learning_rate: default_learning_rate(),
            epochs: default_epochs(),
            seed,
            init_sigma: default_init_sigma(),
            l2_w: 0.0,
            l2_v: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("fm.k must be >= 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("fm.learning_rate must be > 0"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("fm.epochs must be >= 1"));
        }
        if !(self.init_sigma > 0.0) {
            return Err(Error::invalid("fm.init_sigma must be > 0"));
        }
        if !(self.l2_w >= 0.0 && self.l2_v >= 0.0) {
            return Err(Error::invalid("fm L2 penalties must be >= 0"));
        }
        Ok(())
    }
}

/// Row-wise SGD on squared loss over a binary design.
///
/// `w0` and `w` start at zero and `V` at `Normal(0, init_sigma^2)`. Rows are
/// reshuffled every epoch. L2 shrinkage is applied to the parameters of the
/// features present in the current row only, so each update costs
/// `O(k * nnz)`.
pub fn train(matrix: &EncodedMatrix, config: &FMTrainConfig) -> Result<FMModel> {
    config.validate()?;
    if matrix.n_rows == 0 {
        return Err(Error::invalid("fm training needs at least one row"));
    }
    if let Some(i) = matrix.target.iter().position(|y| !y.is_finite()) {
        return Err(Error::invalid(format!("non-finite target at row {i}")));
    }

    let d = matrix.n_cols;
    let k = config.k;
    let mut rng = rng::seeded(config.seed);
    let init = Normal::new(0.0, config.init_sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut model = FMModel::zeros(d, k);
    for v in model.v.iter_mut() {
        *v = init.sample(&mut rng);
    }

    let lr = config.learning_rate;
    let mut order: Vec<usize> = (0..matrix.n_rows).collect();
    let mut sums = vec![0.0; k];
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for &r in &order {
            let active = &matrix.rows[r];
            let residual = model.predict_active(active) - matrix.target[r];

            sums.iter_mut().for_each(|s| *s = 0.0);
            for &i in active {
                for (s, v) in sums.iter_mut().zip(model.v_row(i)) {
                    *s += v;
                }
            }

            model.w0 -= lr * residual;
            for &i in active {
                let wi = &mut model.w[i];
                *wi -= lr * (residual + config.l2_w * *wi);
                for (l, vil) in model.v[i * k..(i + 1) * k].iter_mut().enumerate() {
                    let g = residual * (sums[l] - *vil) + config.l2_v * *vil;
                    *vil -= lr * g;
                }
            }
        }
        if !model.is_finite() {
            return Err(Error::Diverged { epoch });
        }
    }
    Ok(model)
}

pub fn rmse(model: &FMModel, matrix: &EncodedMatrix) -> Result<f64> {
    if matrix.n_rows == 0 {
        return Err(Error::invalid("rmse needs at least one row"));
    }
    if matrix.n_cols != model.d() {
        return Err(Error::DimensionMismatch {
            expected: model.d(),
            got: matrix.n_cols,
        });
    }
    let sse: f64 = matrix
        .rows
        .iter()
        .zip(&matrix.target)
        .map(|(row, y)| {
            let r = model.predict_active(row) - y;
            r * r
        })
        .sum();
    Ok((sse / matrix.n_rows as f64).sqrt())
}

/// Pairwise interaction strengths `M[i][j] = <v_i, v_j>`.
///
/// Off-diagonal cells are the additive change in the prediction when
/// features `i` and `j` are both 1. The diagonal is filled with `|v_i|^2`
/// for completeness but carries no meaning: the model has no self-pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

pub fn interaction_matrix(model: &FMModel, labels: Vec<String>) -> Result<InteractionMatrix> {
    let d = model.d();
    if labels.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: labels.len(),
        });
    }
    let mut values = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in i..d {
            let m = model.dot(i, j);
            values[i][j] = m;
            values[j][i] = m;
        }
    }
    Ok(InteractionMatrix { labels, values })
}

impl InteractionMatrix {
    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    /// Sub-matrix over `indices`, in that order.
    pub fn restrict(&self, indices: &[usize]) -> InteractionMatrix {
        InteractionMatrix {
            labels: indices.iter().map(|&i| self.labels[i].clone()).collect(),
            values: indices
                .iter()
                .map(|&i| indices.iter().map(|&j| self.values[i][j]).collect())
                .collect(),
        }
    }

    /// Off-diagonal pairs `(i, j, M[i][j])` with `i < j`, by descending
    /// `|M[i][j]|`; ties keep row-major order.
    pub fn ranked_pairs(&self) -> Vec<(usize, usize, f64)> {
        let d = self.dim();
        let mut pairs: Vec<(usize, usize, f64)> = (0..d)
            .flat_map(|i| ((i + 1)..d).map(move |j| (i, j)))
            .map(|(i, j)| (i, j, self.values[i][j]))
            .collect();
        pairs.sort_by(|a, b| b.2.abs().total_cmp(&a.2.abs()));
        pairs
    }

    /// CSV with the labels as header and one line per matrix row.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.labels)
            .map_err(|e| Error::Serialization(e.to_string()))?;
        for row in &self.values {
            w.write_record(row.iter().map(f64::to_string))
                .map_err(|e| Error::Serialization(e.to_string()))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Serialization(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let labels: Vec<String> = r
            .headers()
            .map_err(|e| Error::Serialization(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| Error::Serialization(e.to_string()))?;
            let row = rec
                .iter()
                .map(|c| c.parse::<f64>().map_err(|e| Error::Serialization(e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            values.push(row);
        }
        if values.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: labels.len(),
                got: values.len(),
            });
        }
        Ok(InteractionMatrix { labels, values })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synth_fm_data;
    use rand::Rng;

    fn hand_model() -> FMModel {
        FMModel::new(1.0, vec![1.0, 2.0], vec![vec![3.0], vec![4.0]]).unwrap()
    }

    fn random_model(d: usize, k: usize, seed: u64) -> FMModel {
        let mut rng = rng::seeded(seed);
        let mut gen = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
        let w0 = gen(1)[0];
        let w = gen(d);
        let v = (0..d).map(|_| gen(k)).collect();
        FMModel::new(w0, w, v).unwrap()
    }

    #[test]
    fn naive_hand_evaluation() {
        let m = hand_model();
        assert_eq!(m.predict_naive(&[1.0, 1.0]).unwrap(), 16.0);
        assert_eq!(m.predict_fast(&[1.0, 1.0]).unwrap(), 16.0);
        assert_eq!(m.predict_naive(&[0.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn zero_factors_reduce_to_linear() {
        let m = FMModel::new(0.5, vec![1.0, -2.0, 3.0], vec![vec![0.0; 2]; 3]).unwrap();
        let x = [0.3, 1.0, -1.0];
        let linear = 0.5 + 0.3 - 2.0 - 3.0;
        assert!((m.predict_naive(&x).unwrap() - linear).abs() < 1e-15);
        assert!((m.predict_fast(&x).unwrap() - linear).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let m = hand_model();
        assert!(matches!(
            m.predict_naive(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
        assert!(m.predict_fast(&[1.0, 0.0, 0.0]).is_err());
        assert!(m.gradient(&[1.0], 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn single_feature_has_no_interaction() {
        let m = FMModel::new(0.0, vec![2.0], vec![vec![5.0, -1.0]]).unwrap();
        assert_eq!(m.predict_naive(&[3.0]).unwrap(), 6.0);
        assert_eq!(m.predict_fast(&[3.0]).unwrap(), 6.0);
    }

    #[test]
    fn sparse_prediction_touches_only_active_factors() {
        let d = 10_000;
        let k = 4;
        let x: Vec<(usize, f64)> = vec![(17, 1.0), (4000, 1.0), (9999, 1.0)];
        let mut touched = 0usize;
        let value = pairwise_term(k, x.iter().copied(), |i, l| {
            touched += 1;
            (i % 7) as f64 * 0.1 + l as f64
        });
        assert_eq!(touched, 3 * k);

        let mut model = FMModel::zeros(d, k);
        for &(i, _) in &x {
            for l in 0..k {
                model.v_row_mut(i)[l] = (i % 7) as f64 * 0.1 + l as f64;
            }
        }
        assert!((model.predict_active(&[17, 4000, 9999]) - value).abs() < 1e-12);
    }

    #[test]
    fn gradient_zero_at_fit_and_for_zero_input() {
        let m = random_model(4, 2, 3);
        let x = [1.0, 0.0, 1.0, 1.0];
        let y = m.predict_fast(&x).unwrap();
        let g = m.gradient(&x, y, 0.0, 0.0).unwrap();
        assert_eq!(g.w0, 0.0);
        assert!(g.w.iter().chain(&g.v).all(|&c| c == 0.0));

        let g = m.gradient(&[0.0; 4], 10.0, 0.0, 0.0).unwrap();
        assert!(g.w0 != 0.0);
        assert!(g.w.iter().chain(&g.v).all(|&c| c == 0.0));
    }

    #[test]
    fn interaction_matrix_cells() {
        let im = interaction_matrix(&hand_model(), vec!["a".into(), "b".into()]).unwrap();
        assert_eq!(im.values[0][1], 12.0);
        assert_eq!(im.values[1][0], 12.0);
        let zero = interaction_matrix(&FMModel::zeros(3, 2), vec!["a".into(), "b".into(), "c".into()])
            .unwrap();
        assert!(zero.values.iter().flatten().all(|&m| m == 0.0));
    }

    #[test]
    fn interaction_matches_second_difference() {
        let m = random_model(6, 3, 11);
        let im = interaction_matrix(&m, (0..6).map(|i| i.to_string()).collect()).unwrap();
        let f = |set: &[usize]| {
            let mut x = vec![0.0; 6];
            for &i in set {
                x[i] = 1.0;
            }
            m.predict_naive(&x).unwrap()
        };
        for i in 0..6 {
            for j in 0..6 {
                if i == j {
                    continue;
                }
                let second = f(&[i, j]) - f(&[i]) - f(&[j]) + f(&[]);
                assert!((second - im.values[i][j]).abs() < 1e-9);
                assert_eq!(im.values[i][j], im.values[j][i]);
            }
        }
    }

    #[test]
    fn heatmap_csv_round_trip() {
        let m = random_model(4, 2, 5);
        let im = interaction_matrix(&m, vec!["CP 34".into(), "b".into(), "c".into(), "d".into()]).unwrap();
        let back = InteractionMatrix::from_csv(&im.to_csv().unwrap()).unwrap();
        assert_eq!(back, im);
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fm.json");
        let m = random_model(7, 3, 2);
        m.save(&path).unwrap();
        let back = FMModel::load(&path).unwrap();
        assert_eq!(back, m);
        for (a, b) in back.v.iter().zip(&m.v) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn truncated_and_wrong_version_files_rejected() {
        let m = random_model(3, 2, 1);
        let json = m.to_json().unwrap();
        assert!(FMModel::from_json(&json[..json.len() / 2]).is_err());
        let v2 = json.replacen("\"version\":1", "\"version\":2", 1);
        assert!(matches!(
            FMModel::from_json(&v2),
            Err(Error::VersionMismatch { expected: 1, found: 2 })
        ));
        assert!(matches!(FMModel::load("/nonexistent/fm.json"), Err(Error::Io { .. })));
    }

    #[test]
    fn rmse_of_constant_predictor() {
        let m = FMModel::new(1.0, vec![0.0], vec![vec![0.0]]).unwrap();
        let data = EncodedMatrix::new(vec!["x".into()], vec![vec![], vec![0]], vec![0.0, 2.0]).unwrap();
        assert!((rmse(&m, &data).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rmse_zero_on_noiseless_generator() {
        let (data, truth) = synth_fm_data(200, 6, 3, 0.0, 4).unwrap();
        assert!(rmse(&truth, &data).unwrap() < 1e-9);
    }

    #[test]
    fn training_is_deterministic() {
        let (data, _) = synth_fm_data(300, 5, 2, 0.1, 8).unwrap();
        let mut cfg = FMTrainConfig::new(21);
        cfg.epochs = 5;
        assert_eq!(train(&data, &cfg).unwrap(), train(&data, &cfg).unwrap());
    }

    #[test]
    fn training_rejects_bad_input() {
        let data = EncodedMatrix::new(vec!["x".into()], vec![vec![0]], vec![f64::NAN]).unwrap();
        assert!(train(&data, &FMTrainConfig::new(0)).is_err());
        let data = EncodedMatrix::new(vec!["x".into()], vec![vec![0]], vec![1.0]).unwrap();
        let mut cfg = FMTrainConfig::new(0);
        cfg.k = 0;
        assert!(train(&data, &cfg).is_err());
    }

    #[test]
    fn divergence_reported() {
        let (data, _) = synth_fm_data(200, 8, 2, 0.0, 1).unwrap();
        let mut cfg = FMTrainConfig::new(0);
        cfg.learning_rate = 50.0;
        cfg.init_sigma = 1.0;
        assert!(matches!(train(&data, &cfg), Err(Error::Diverged { .. })));
    }
}
