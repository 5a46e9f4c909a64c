//! Shapley attributions for prediction functions over feature vectors.
//!
//! The game for an instance `x` is the interventional characteristic
//! function
//!
//! ```text
//! v(S) = mean_{y in B} f(tau(x, y, S)) - mean_{z in B} f(z)
//! ```
//!
//! where `B` is a background sample and `tau` takes the coordinates in `S`
//! from `x` and the rest from `y`. Attributions are computed either by exact
//! subset enumeration or by averaging marginal contributions over random
//! feature orderings.

use std::fs;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fm::FMModel;
use crate::nnclassifier::MLPParams;
use crate::{rng, Error, Result};

/// Largest feature count accepted by [`exact_shapley`].
pub const MAX_EXACT_FEATURES: usize = 25;

/// A pure prediction function. Implementations must be safe to call from
/// several threads at once.
pub trait Model: Sync {
    fn predict(&self, x: &[f64]) -> f64;
}

impl<F> Model for F
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn predict(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// Explains the positive-class probability.
impl Model for MLPParams {
    fn predict(&self, x: &[f64]) -> f64 {
        self.probability(x)
    }
}

impl Model for FMModel {
    fn predict(&self, x: &[f64]) -> f64 {
        self.predict_fast(x).expect("input width matches the model")
    }
}

/// Model, instance and background defining one cooperative game.
pub struct CharacteristicContext<'a, M: Model + ?Sized> {
    model: &'a M,
    instance: Vec<f64>,
    background: &'a [Vec<f64>],
    base_value: f64,
}

impl<'a, M: Model + ?Sized> CharacteristicContext<'a, M> {
    pub fn new(model: &'a M, instance: &[f64], background: &'a [Vec<f64>]) -> Result<Self> {
        if background.is_empty() {
            return Err(Error::invalid("background must be nonempty"));
        }
        let d = instance.len();
        if let Some(row) = background.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: row.len(),
            });
        }
        let base_value =
            background.iter().map(|z| model.predict(z)).sum::<f64>() / background.len() as f64;
        Ok(CharacteristicContext {
            model,
            instance: instance.to_vec(),
            background,
            base_value,
        })
    }

    pub fn dim(&self) -> usize {
        self.instance.len()
    }

    /// Mean model output over the background.
    pub fn base_value(&self) -> f64 {
        self.base_value
    }

    /// `v(S)` for the coalition given as feature indices.
    pub fn characteristic_value(&self, subset: &[usize]) -> Result<f64> {
        let mut mask = vec![false; self.dim()];
        for &i in subset {
            if i >= self.dim() {
                return Err(Error::invalid(format!(
                    "feature {i} outside [0, {})",
                    self.dim()
                )));
            }
            mask[i] = true;
        }
        Ok(self.value_of(|i| mask[i]))
    }

    fn value_of(&self, in_coalition: impl Fn(usize) -> bool) -> f64 {
        let d = self.dim();
        let mut z = vec![0.0; d];
        let mut total = 0.0;
        for y in self.background {
            for i in 0..d {
                z[i] = if in_coalition(i) { self.instance[i] } else { y[i] };
            }
            total += self.model.predict(&z);
        }
        total / self.background.len() as f64 - self.base_value
    }

    /// Marginal contributions along one ordering. Walks each background row
    /// from `y` towards `x`, so coordinates where they agree cost nothing.
    fn marginals_along(&self, order: &[usize], out: &mut [f64]) {
        out.iter_mut().for_each(|m| *m = 0.0);
        let scale = 1.0 / self.background.len() as f64;
        let mut z = vec![0.0; self.dim()];
        for y in self.background {
            z.copy_from_slice(y);
            let mut prev = self.model.predict(&z);
            for &i in order {
                if self.instance[i] == y[i] {
                    continue;
                }
                z[i] = self.instance[i];
                let cur = self.model.predict(&z);
                out[i] += (cur - prev) * scale;
                prev = cur;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Exact,
    Permutation,
}

/// Attribution of one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub instance: Vec<f64>,
    pub values: Vec<f64>,
    pub base_value: f64,
    pub estimator: EstimatorKind,
    /// 0 for the exact estimator.
    pub n_permutations: usize,
    /// Standard error of each value; zeros for the exact estimator.
    pub std_errors: Vec<f64>,
    /// Coalition values `v(S)` computed (exact estimator only).
    pub coalition_evaluations: usize,
}

impl Attribution {
    /// Model output at the instance minus the base value, i.e. `v(N)`.
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

fn shapley_weights(d: usize) -> Vec<f64> {
    // |S|! (d - |S| - 1)! / d! = 1 / (d * C(d-1, |S|))
    let mut binom = 1.0;
    (0..d)
        .map(|s| {
            if s > 0 {
                binom = binom * (d - s) as f64 / s as f64;
            }
            1.0 / (d as f64 * binom)
        })
        .collect()
}

/// Exact Shapley values by enumerating all `2^d` coalitions once each.
pub fn exact_shapley<M: Model + ?Sized>(ctx: &CharacteristicContext<'_, M>) -> Result<Attribution> {
    let d = ctx.dim();
    if d > MAX_EXACT_FEATURES {
        return Err(Error::TooManyFeatures {
            d,
            max: MAX_EXACT_FEATURES,
        });
    }
    let n_sets = 1usize << d;
    let mut v = vec![0.0; n_sets];
    // v(empty) = 0 by construction
    for (mask, slot) in v.iter_mut().enumerate().skip(1) {
        *slot = ctx.value_of(|i| mask >> i & 1 == 1);
    }
    let weights = shapley_weights(d);
    let mut values = vec![0.0; d];
    for (i, phi) in values.iter_mut().enumerate() {
        let bit = 1usize << i;
        *phi = (0..n_sets)
            .filter(|mask| mask & bit == 0)
            .map(|mask| weights[mask.count_ones() as usize] * (v[mask | bit] - v[mask]))
            .sum();
    }
    Ok(Attribution {
        instance: ctx.instance.clone(),
        values,
        base_value: ctx.base_value,
        estimator: EstimatorKind::Exact,
        n_permutations: 0,
        std_errors: vec![0.0; d],
        coalition_evaluations: n_sets - 1,
    })
}

fn summarize(ctx_instance: &[f64], base_value: f64, sum: &[f64], sum_sq: &[f64], n: usize) -> Attribution {
    let nf = n as f64;
    let values: Vec<f64> = sum.iter().map(|s| s / nf).collect();
    let std_errors = sum_sq
        .iter()
        .zip(&values)
        .map(|(sq, mean)| {
            if n < 2 {
                return 0.0;
            }
            let var = ((sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
            (var / nf).sqrt()
        })
        .collect();
    Attribution {
        instance: ctx_instance.to_vec(),
        values,
        base_value,
        estimator: EstimatorKind::Permutation,
        n_permutations: n,
        std_errors,
        coalition_evaluations: 0,
    }
}

/// Monte Carlo Shapley values over `n_permutations` uniformly drawn feature
/// orderings. Standard errors are sample standard deviations over
/// orderings divided by `sqrt(n_permutations)`.
pub fn perm_shapley<M: Model + ?Sized>(
    ctx: &CharacteristicContext<'_, M>,
    n_permutations: usize,
    seed: u64,
) -> Result<Attribution> {
    perm_shapley_with(ctx, n_permutations, &mut rng::seeded(seed))
}

fn perm_shapley_with<M: Model + ?Sized>(
    ctx: &CharacteristicContext<'_, M>,
    n_permutations: usize,
    rng: &mut impl rand::Rng,
) -> Result<Attribution> {
    if n_permutations < 2 {
        return Err(Error::invalid("n_permutations must be >= 2"));
    }
    let d = ctx.dim();
    let mut order: Vec<usize> = (0..d).collect();
    let mut sum = vec![0.0; d];
    let mut sum_sq = vec![0.0; d];
    let mut marg = vec![0.0; d];
    for _ in 0..n_permutations {
        order.shuffle(rng);
        ctx.marginals_along(&order, &mut marg);
        for i in 0..d {
            sum[i] += marg[i];
            sum_sq[i] += marg[i] * marg[i];
        }
    }
    Ok(summarize(&ctx.instance, ctx.base_value, &sum, &sum_sq, n_permutations))
}

/// Largest feature count for [`all_permutations_shapley`].
pub const MAX_PERMUTATION_ENUMERATION: usize = 10;

/// The permutation estimator run over every one of the `d!` orderings.
pub fn all_permutations_shapley<M: Model + ?Sized>(
    ctx: &CharacteristicContext<'_, M>,
) -> Result<Attribution> {
    let d = ctx.dim();
    if d > MAX_PERMUTATION_ENUMERATION {
        return Err(Error::TooManyFeatures {
            d,
            max: MAX_PERMUTATION_ENUMERATION,
        });
    }
    let mut sum = vec![0.0; d];
    let mut sum_sq = vec![0.0; d];
    let mut marg = vec![0.0; d];
    let mut count = 0usize;
    let mut order: Vec<usize> = (0..d).collect();
    // Heap's algorithm, iterative form.
    let mut c = vec![0usize; d];
    let mut visit = |order: &[usize]| {
        ctx.marginals_along(order, &mut marg);
        for i in 0..d {
            sum[i] += marg[i];
            sum_sq[i] += marg[i] * marg[i];
        }
        count += 1;
    };
    visit(&order);
    let mut i = 0;
    while i < d {
        if c[i] < i {
            if i % 2 == 0 {
                order.swap(0, i);
            } else {
                order.swap(c[i], i);
            }
            visit(&order);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(summarize(&ctx.instance, ctx.base_value, &sum, &sum_sq, count))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Estimator {
    Exact,
    Permutation { n_permutations: usize, seed: u64 },
}

/// Attributions for every row of `eval_rows`. Rows run in parallel; each
/// row draws its orderings from its own stream, so results match a
/// sequential run exactly.
pub fn attribute_rows<M: Model + ?Sized>(
    model: &M,
    eval_rows: &[Vec<f64>],
    background: &[Vec<f64>],
    estimator: Estimator,
) -> Result<Vec<Attribution>> {
    if eval_rows.is_empty() {
        return Err(Error::invalid("eval_rows must be nonempty"));
    }
    eval_rows
        .par_iter()
        .enumerate()
        .map(|(r, x)| {
            let ctx = CharacteristicContext::new(model, x, background)?;
            match estimator {
                Estimator::Exact => exact_shapley(&ctx),
                Estimator::Permutation {
                    n_permutations,
                    seed,
                } => perm_shapley_with(&ctx, n_permutations, &mut rng::seeded_stream(seed, r as u64)),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub feature: String,
    pub importance: f64,
}

/// Features ordered by non-increasing importance. Serializes as a JSON
/// array of `{feature, importance}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GlobalImportance {
    pub entries: Vec<ImportanceEntry>,
}

impl GlobalImportance {
    /// Sorts by descending importance; equal values keep the order of
    /// `entries`, which should be ascending feature index.
    pub fn from_unsorted(mut entries: Vec<ImportanceEntry>) -> Self {
        entries.sort_by(|a, b| b.importance.total_cmp(&a.importance));
        GlobalImportance { entries }
    }

    /// Mean absolute attribution per feature.
    pub fn from_attributions(attributions: &[Attribution], feature_ids: &[String]) -> Result<Self> {
        if attributions.is_empty() {
            return Err(Error::invalid("no attributions to aggregate"));
        }
        let d = feature_ids.len();
        if let Some(a) = attributions.iter().find(|a| a.values.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: a.values.len(),
            });
        }
        let n = attributions.len() as f64;
        let entries = feature_ids
            .iter()
            .enumerate()
            .map(|(i, id)| ImportanceEntry {
                feature: id.clone(),
                importance: attributions.iter().map(|a| a.values[i].abs()).sum::<f64>() / n,
            })
            .collect();
        Ok(Self::from_unsorted(entries))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn importance_of(&self, feature: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.feature == feature)
            .map(|e| e.importance)
    }

    /// The `k` most important features.
    pub fn top_k(&self, k: usize) -> Result<Vec<ImportanceEntry>> {
        if k == 0 || k > self.len() {
            return Err(Error::invalid(format!(
                "k = {k} outside [1, {}]",
                self.len()
            )));
        }
        Ok(self.entries[..k].to_vec())
    }

    /// Reads a ranking from CSV with `provision_id` and `importance`
    /// columns; any other columns are ignored.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))?;
        let header = reader
            .headers()
            .map_err(|e| Error::Serialization(e.to_string()))?
            .clone();
        let col = |name: &str| {
            header.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: format!("missing column '{name}'"),
            })
        };
        let (id_col, value_col) = (col("provision_id")?, col("importance")?);
        let mut entries = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| Error::Serialization(e.to_string()))?;
            let line = rec.position().map_or(0, |p| p.line());
            let importance = rec[value_col].parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("invalid importance '{}'", &rec[value_col]),
            })?;
            entries.push(ImportanceEntry {
                feature: rec[id_col].to_string(),
                importance,
            });
        }
        Ok(Self::from_unsorted(entries))
    }
}

/// Mean |SHAP| importance of each feature over `eval_rows`.
pub fn global_importance<M: Model + ?Sized>(
    model: &M,
    eval_rows: &[Vec<f64>],
    background: &[Vec<f64>],
    feature_ids: &[String],
    estimator: Estimator,
) -> Result<GlobalImportance> {
    let attributions = attribute_rows(model, eval_rows, background, estimator)?;
    GlobalImportance::from_attributions(&attributions, feature_ids)
}

/// Up to `max_rows` distinct rows drawn under `seed`, in their original
/// order.
pub fn sample_rows(rows: &[Vec<f64>], max_rows: usize, seed: u64) -> Vec<Vec<f64>> {
    if rows.len() <= max_rows {
        return rows.to_vec();
    }
    let mut picked = index::sample(&mut rng::seeded(seed), rows.len(), max_rows).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| rows[i].clone()).collect()
}

/// One point of a beeswarm-style summary plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub feature_id: String,
    pub row_index: usize,
    pub feature_value: f64,
    pub shap_value: f64,
}

pub fn summary_rows(attributions: &[Attribution], feature_ids: &[String]) -> Result<Vec<SummaryRow>> {
    if attributions.is_empty() {
        return Err(Error::invalid("no attributions to export"));
    }
    let mut out = Vec::with_capacity(attributions.len() * feature_ids.len());
    for (r, a) in attributions.iter().enumerate() {
        if a.values.len() != feature_ids.len() {
            return Err(Error::DimensionMismatch {
                expected: feature_ids.len(),
                got: a.values.len(),
            });
        }
        for (i, id) in feature_ids.iter().enumerate() {
            out.push(SummaryRow {
                feature_id: id.clone(),
                row_index: r,
                feature_value: a.instance[i],
                shap_value: a.values[i],
            });
        }
    }
    Ok(out)
}

/// Writes `feature_id,row_index,feature_value,shap_value` lines.
pub fn write_summary(rows: &[SummaryRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| Error::Serialization(e.to_string()))?;
    }
    if rows.is_empty() {
        w.write_record(["feature_id", "row_index", "feature_value", "shap_value"])
            .map_err(|e| Error::Serialization(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Serialization(e.to_string()))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn export_summary(
    attributions: &[Attribution],
    feature_ids: &[String],
    path: impl AsRef<Path>,
) -> Result<()> {
    write_summary(&summary_rows(attributions, feature_ids)?, path)
}

pub fn read_summary(path: impl AsRef<Path>) -> Result<Vec<SummaryRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    reader
        .deserialize()
        .map(|r| r.map_err(|e| Error::Serialization(format!("{}: {e}", path.display()))))
        .collect()
}
