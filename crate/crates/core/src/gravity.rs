//! Reference gravity estimators: log-linear OLS, three-way PPML and
//! Lasso-penalized PPML.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnKind, EncodedMatrix};
use crate::linalg::{cholesky_solve, Cholesky};
use crate::{Error, Result};

/// One bilateral observation for the log-linear model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GravityObs {
    pub gdp_origin: f64,
    pub gdp_destination: f64,
    pub distance: f64,
    pub flow: f64,
}

/// `FLOW = alpha * GDP_o^b1 * GDP_d^b2 / DIST^b3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLinearGravity {
    pub ln_alpha: f64,
    pub beta_gdp_origin: f64,
    pub beta_gdp_destination: f64,
    pub beta_distance: f64,
}

impl LogLinearGravity {
    pub fn predict(&self, obs: &GravityObs) -> f64 {
        (self.ln_alpha + self.beta_gdp_origin * obs.gdp_origin.ln()
            + self.beta_gdp_destination * obs.gdp_destination.ln()
            - self.beta_distance * obs.distance.ln())
        .exp()
    }
}

const OLS_JITTER: f64 = 1e-10;
const OLS_PIVOT_TOL: f64 = 1e-9;

/// Ordinary least squares of `ln FLOW` on `[1, ln GDP_o, ln GDP_d, -ln DIST]`.
pub fn fit_loglinear_gravity(observations: &[GravityObs]) -> Result<LogLinearGravity> {
    if observations.len() < 4 {
        return Err(Error::invalid(format!(
            "need at least 4 observations, got {}",
            observations.len()
        )));
    }
    let mut gram = [0.0; 16];
    let mut rhs = [0.0; 4];
    for (i, o) in observations.iter().enumerate() {
        let fields = [o.gdp_origin, o.gdp_destination, o.distance];
        if fields.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid(format!(
                "observation {i}: GDPs and distance must be positive"
            )));
        }
        if !(o.flow.is_finite() && o.flow > 0.0) {
            return Err(Error::invalid(format!(
                "observation {i}: flow {} is not positive; the log-linear model needs positive flows",
                o.flow
            )));
        }
        let x = [1.0, o.gdp_origin.ln(), o.gdp_destination.ln(), -o.distance.ln()];
        let y = o.flow.ln();
        for a in 0..4 {
            rhs[a] += x[a] * y;
            for b in 0..4 {
                gram[a * 4 + b] += x[a] * x[b];
            }
        }
    }
    for a in 0..4 {
        gram[a * 4 + a] += OLS_JITTER;
    }
    let coef = cholesky_solve(&gram, &rhs, 4, OLS_PIVOT_TOL)?;
    Ok(LogLinearGravity {
        ln_alpha: coef[0],
        beta_gdp_origin: coef[1],
        beta_gdp_destination: coef[2],
        beta_distance: coef[3],
    })
}

/// Fitted Poisson gravity model. Fixed effects are keyed by their level,
/// e.g. `"USA:2015"` for an exporter-year and `"USA:DEU"` for a pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PPMLModel {
    pub beta: BTreeMap<String, f64>,
    pub fe_exporter_year: BTreeMap<String, f64>,
    pub fe_importer_year: BTreeMap<String, f64>,
    pub fe_pair: BTreeMap<String, f64>,
    /// Intercept and one-way exporter, importer or year dummies, keyed by
    /// full column name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub other: BTreeMap<String, f64>,
}

impl PPMLModel {
    fn from_coefficients(columns: &[String], theta: &[f64]) -> Self {
        let mut m = PPMLModel {
            beta: BTreeMap::new(),
            fe_exporter_year: BTreeMap::new(),
            fe_importer_year: BTreeMap::new(),
            fe_pair: BTreeMap::new(),
            other: BTreeMap::new(),
        };
        for (name, &value) in columns.iter().zip(theta) {
            let (kind, level) = ColumnKind::parse(name);
            let (map, key) = match kind {
                ColumnKind::Provision => (&mut m.beta, level),
                ColumnKind::ExporterYear => (&mut m.fe_exporter_year, level),
                ColumnKind::ImporterYear => (&mut m.fe_importer_year, level),
                ColumnKind::Pair => (&mut m.fe_pair, level),
                _ => (&mut m.other, name.as_str()),
            };
            map.insert(key.to_string(), value);
        }
        m
    }

    fn coefficient(&self, column: &str) -> Result<f64> {
        let (kind, level) = ColumnKind::parse(column);
        let (map, key, label) = match kind {
            ColumnKind::Provision => (&self.beta, level, "provision"),
            ColumnKind::ExporterYear => (&self.fe_exporter_year, level, "exporter-year"),
            ColumnKind::ImporterYear => (&self.fe_importer_year, level, "importer-year"),
            ColumnKind::Pair => (&self.fe_pair, level, "pair"),
            ColumnKind::Intercept => (&self.other, column, "intercept"),
            ColumnKind::Exporter => (&self.other, column, "exporter"),
            ColumnKind::Importer => (&self.other, column, "importer"),
            ColumnKind::Year => (&self.other, column, "year"),
        };
        map.get(key).copied().ok_or_else(|| Error::UnknownLevel {
            kind: label,
            level: level.to_string(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Solver limits shared by both Poisson fits. `tolerance` bounds the
/// largest first-order optimality violation, measured relative to the mean
/// target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PPMLConfig {
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_max_iters() -> usize {
    200
}

fn default_tolerance() -> f64 {
    1e-10
}

impl Default for PPMLConfig {
    fn default() -> Self {
        PPMLConfig {
            max_iters: default_max_iters(),
            tolerance: default_tolerance(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LassoConfig {
    pub lambda: f64,
    /// One loading per provision column, in column order; all 1 when absent.
    #[serde(default)]
    pub penalty_loadings: Option<Vec<f64>>,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

impl LassoConfig {
    pub fn new(lambda: f64) -> Self {
        LassoConfig {
            lambda,
            penalty_loadings: None,
            max_iters: default_max_iters(),
            tolerance: default_tolerance(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub model: PPMLModel,
    /// Provisions with a nonzero coefficient, in column order.
    pub active_set: Vec<String>,
}

/// Unpenalized columns beyond this make the dense Hessian impractical.
pub const MAX_PPML_COLUMNS: usize = 4000;

/// Poisson pseudo-maximum-likelihood fit. Every column is an ordinary
/// coefficient; fixed effects are the columns whose names carry a
/// fixed-effect prefix.
pub fn ppml_fit(matrix: &EncodedMatrix, config: &PPMLConfig) -> Result<PPMLModel> {
    let penalty = vec![0.0; matrix.n_cols];
    let theta = poisson_fit(matrix, &penalty, config.max_iters, config.tolerance)?;
    Ok(PPMLModel::from_coefficients(&matrix.columns, &theta))
}

/// PPML with an L1 penalty `lambda * loading_l / n` on each provision
/// coefficient. Fixed effects are never penalized.
pub fn lasso_ppml_fit(matrix: &EncodedMatrix, config: &LassoConfig) -> Result<LassoFit> {
    if !(config.lambda.is_finite() && config.lambda >= 0.0) {
        return Err(Error::invalid(format!(
            "lambda must be a finite value >= 0, got {}",
            config.lambda
        )));
    }
    let provisions: Vec<usize> = (0..matrix.n_cols)
        .filter(|&j| !ColumnKind::parse(&matrix.columns[j]).0.is_fixed_effect())
        .collect();
    let loadings = match &config.penalty_loadings {
        None => vec![1.0; provisions.len()],
        Some(l) if l.len() != provisions.len() => {
            return Err(Error::DimensionMismatch {
                expected: provisions.len(),
                got: l.len(),
            })
        }
        Some(l) => {
            if l.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::invalid("penalty loadings must be finite and >= 0"));
            }
            l.clone()
        }
    };
    let n = matrix.n_rows.max(1) as f64;
    let mut penalty = vec![0.0; matrix.n_cols];
    for (&j, &phi) in provisions.iter().zip(&loadings) {
        penalty[j] = config.lambda * phi / n;
    }
    let theta = poisson_fit(matrix, &penalty, config.max_iters, config.tolerance)?;
    let active_set = provisions
        .iter()
        .filter(|&&j| theta[j] != 0.0)
        .map(|&j| matrix.columns[j].clone())
        .collect();
    Ok(LassoFit {
        model: PPMLModel::from_coefficients(&matrix.columns, &theta),
        active_set,
    })
}

/// `exp` of the linear index of every row.
pub fn ppml_predict(model: &PPMLModel, matrix: &EncodedMatrix) -> Result<Vec<f64>> {
    let coef: Vec<f64> = matrix
        .columns
        .iter()
        .map(|c| model.coefficient(c))
        .collect::<Result<_>>()?;
    Ok(matrix
        .rows
        .iter()
        .map(|row| row.iter().map(|&j| coef[j]).sum::<f64>().exp())
        .collect())
}

fn linear_index(matrix: &EncodedMatrix, theta: &[f64]) -> Vec<f64> {
    matrix
        .rows
        .iter()
        .map(|row| row.iter().map(|&j| theta[j]).sum())
        .collect()
}

/// `(1/n) sum(mu - X eta) + sum_j penalty_j |theta_j|`, infinite on overflow.
fn objective(matrix: &EncodedMatrix, eta: &[f64], theta: &[f64], penalty: &[f64]) -> f64 {
    let n = matrix.n_rows as f64;
    let mut total = 0.0;
    for (e, x) in eta.iter().zip(&matrix.target) {
        total += e.exp() - x * e;
    }
    let pen: f64 = theta.iter().zip(penalty).map(|(t, p)| p * t.abs()).sum();
    let value = total / n + pen;
    if value.is_finite() {
        value
    } else {
        f64::INFINITY
    }
}

/// Starting point with every fitted mean equal to the target mean, when
/// some column block covers each row exactly once.
fn initial_theta(matrix: &EncodedMatrix, mean: f64) -> Vec<f64> {
    let mut theta = vec![0.0; matrix.n_cols];
    let kinds: Vec<ColumnKind> = matrix.columns.iter().map(|c| ColumnKind::parse(c).0).collect();
    let candidates = [
        ColumnKind::Intercept,
        ColumnKind::ExporterYear,
        ColumnKind::ImporterYear,
        ColumnKind::Pair,
        ColumnKind::Exporter,
        ColumnKind::Importer,
        ColumnKind::Year,
    ];
    for kind in candidates {
        let covers = matrix
            .rows
            .iter()
            .all(|row| row.iter().filter(|&&j| kinds[j] == kind).count() == 1);
        if covers {
            for (t, k) in theta.iter_mut().zip(&kinds) {
                if *k == kind {
                    *t = mean.ln();
                }
            }
            break;
        }
    }
    theta
}

const HESSIAN_RIDGE: f64 = 1e-12;
const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

/// Proximal Newton for the penalized Poisson objective. Coordinates with
/// zero penalty are eliminated in closed form from the local quadratic
/// model; the remaining penalized block is solved by coordinate descent.
fn poisson_fit(
    matrix: &EncodedMatrix,
    penalty: &[f64],
    max_iters: usize,
    tolerance: f64,
) -> Result<Vec<f64>> {
    matrix.validate()?;
    if matrix.n_rows == 0 || matrix.n_cols == 0 {
        return Err(Error::invalid("empty design matrix"));
    }
    if let Some(x) = matrix.target.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(Error::invalid(format!("target {x} is negative or not finite")));
    }
    let n = matrix.n_rows as f64;
    let mean = matrix.target.iter().sum::<f64>() / n;
    if mean <= 0.0 {
        return Err(Error::invalid("all targets are zero"));
    }
    if !(tolerance > 0.0) || max_iters == 0 {
        return Err(Error::invalid("tolerance must be > 0 and max_iters >= 1"));
    }
    let free: Vec<usize> = (0..matrix.n_cols).filter(|&j| penalty[j] == 0.0).collect();
    let pen: Vec<usize> = (0..matrix.n_cols).filter(|&j| penalty[j] > 0.0).collect();
    if free.len() > MAX_PPML_COLUMNS {
        return Err(Error::invalid(format!(
            "{} unpenalized columns exceed the dense limit of {MAX_PPML_COLUMNS}",
            free.len()
        )));
    }
    let p = matrix.n_cols;
    let mut slot = vec![usize::MAX; p];
    for (s, &j) in free.iter().enumerate() {
        slot[j] = s;
    }
    for (s, &j) in pen.iter().enumerate() {
        slot[j] = s;
    }

    let mut theta = initial_theta(matrix, mean);
    let mut eta = linear_index(matrix, &theta);
    let mut f = objective(matrix, &eta, &theta, penalty);
    let mut violation = f64::INFINITY;

    for _ in 0..max_iters {
        // gradient and Hessian blocks at the current point
        let mut grad = vec![0.0; p];
        let nf = free.len();
        let np = pen.len();
        let mut h_ff = vec![0.0; nf * nf];
        let mut h_fp = vec![0.0; nf * np];
        let mut h_pp = vec![0.0; np * np];
        for (row, (&e, &x)) in matrix.rows.iter().zip(eta.iter().zip(&matrix.target)) {
            let mu = e.exp();
            for &a in row {
                grad[a] += (mu - x) / n;
                for &b in row {
                    let w = mu / n;
                    match (penalty[a] == 0.0, penalty[b] == 0.0) {
                        (true, true) => h_ff[slot[a] * nf + slot[b]] += w,
                        (true, false) => h_fp[slot[a] * np + slot[b]] += w,
                        (false, false) => h_pp[slot[a] * np + slot[b]] += w,
                        (false, true) => {}
                    }
                }
            }
        }

        violation = (0..p)
            .map(|j| optimality_violation(theta[j], grad[j], penalty[j]))
            .fold(0.0, f64::max);
        if violation <= tolerance * mean {
            return Ok(theta);
        }

        let step = newton_direction(&theta, &grad, penalty, &free, &pen, &h_ff, &h_fp, &mut h_pp)?;

        // model decrease for the Armijo test
        let lin: f64 = (0..p).map(|j| grad[j] * step[j]).sum();
        let pen_change: f64 = (0..p)
            .map(|j| penalty[j] * ((theta[j] + step[j]).abs() - theta[j].abs()))
            .sum();
        let decrease = lin + pen_change;

        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = theta.iter().zip(&step).map(|(a, d)| a + t * d).collect();
            let trial_eta = linear_index(matrix, &trial);
            let trial_f = objective(matrix, &trial_eta, &trial, penalty);
            let slack = 1e-13 * (f.abs() + mean);
            if trial_f <= f + ARMIJO * t * decrease.min(0.0) + slack {
                theta = trial;
                eta = trial_eta;
                f = trial_f;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::NoConvergence {
                iterations: max_iters,
                gradient_norm: violation,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iters,
        gradient_norm: violation,
    })
}

/// Distance of zero from the subdifferential of coordinate `j`.
fn optimality_violation(theta: f64, grad: f64, penalty: f64) -> f64 {
    if penalty == 0.0 {
        grad.abs()
    } else if theta != 0.0 {
        (grad + penalty * theta.signum()).abs()
    } else {
        (grad.abs() - penalty).max(0.0)
    }
}

#[allow(clippy::too_many_arguments)]
fn newton_direction(
    theta: &[f64],
    grad: &[f64],
    penalty: &[f64],
    free: &[usize],
    pen: &[usize],
    h_ff: &[f64],
    h_fp: &[f64],
    h_pp: &mut [f64],
) -> Result<Vec<f64>> {
    let nf = free.len();
    let np = pen.len();
    let mut step = vec![0.0; theta.len()];

    let chol = if nf > 0 {
        let mut h = h_ff.to_vec();
        let ridge = HESSIAN_RIDGE * (0..nf).map(|i| h[i * nf + i]).fold(0.0, f64::max)
            + f64::MIN_POSITIVE;
        for i in 0..nf {
            h[i * nf + i] += ridge;
        }
        Some(Cholesky::factor(&h, nf, 0.0)?)
    } else {
        None
    };
    let g_f: Vec<f64> = free.iter().map(|&j| grad[j]).collect();
    let a = chol.as_ref().map(|c| c.solve(&g_f)).unwrap_or_default();

    if np == 0 {
        for (s, &j) in free.iter().enumerate() {
            step[j] = -a[s];
        }
        return Ok(step);
    }

    // Schur complement of the free block: reduced quadratic over the
    // penalized coordinates.
    let mut cross = vec![vec![0.0; nf]; np];
    if let Some(c) = &chol {
        for (l, col) in cross.iter_mut().enumerate() {
            let rhs: Vec<f64> = (0..nf).map(|s| h_fp[s * np + l]).collect();
            *col = c.solve(&rhs);
        }
    }
    let mut g_red = vec![0.0; np];
    for l in 0..np {
        let mut s = grad[pen[l]];
        for r in 0..nf {
            s -= h_fp[r * np + l] * a[r];
        }
        g_red[l] = s;
        for m in 0..np {
            let mut v = 0.0;
            for r in 0..nf {
                v += h_fp[r * np + l] * cross[m][r];
            }
            h_pp[l * np + m] -= v;
        }
    }
    let max_diag = (0..np).map(|l| h_pp[l * np + l]).fold(0.0, f64::max);
    for l in 0..np {
        h_pp[l * np + l] += HESSIAN_RIDGE * max_diag + f64::MIN_POSITIVE;
    }

    // coordinate descent on u = beta + d
    let beta: Vec<f64> = pen.iter().map(|&j| theta[j]).collect();
    let lin: Vec<f64> = (0..np)
        .map(|l| g_red[l] - (0..np).map(|m| h_pp[l * np + m] * beta[m]).sum::<f64>())
        .collect();
    let mut u = beta.clone();
    for _ in 0..10_000 {
        let mut change = 0.0_f64;
        for l in 0..np {
            let mut z = lin[l];
            for m in 0..np {
                if m != l {
                    z += h_pp[l * np + m] * u[m];
                }
            }
            let new = soft_threshold(-z, penalty[pen[l]]) / h_pp[l * np + l];
            change = change.max((new - u[l]).abs());
            u[l] = new;
        }
        let scale = u.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
        if change <= 1e-15 * scale {
            break;
        }
    }
    let d: Vec<f64> = u.iter().zip(&beta).map(|(u, b)| u - b).collect();
    for (l, &j) in pen.iter().enumerate() {
        step[j] = d[l];
    }
    for (s, &j) in free.iter().enumerate() {
        let mut v = a[s];
        for l in 0..np {
            v += cross[l][s] * d[l];
        }
        step[j] = -v;
    }
    Ok(step)
}

fn soft_threshold(z: f64, c: f64) -> f64 {
    if z > c {
        z - c
    } else if z < -c {
        z + c
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn obs_from(ln_alpha: f64, b: [f64; 3], go: f64, gd: f64, dist: f64) -> GravityObs {
        let flow = (ln_alpha + b[0] * go.ln() + b[1] * gd.ln() - b[2] * dist.ln()).exp();
        GravityObs { gdp_origin: go, gdp_destination: gd, distance: dist, flow }
    }

    #[test]
    fn loglinear_recovers_noiseless_coefficients() {
        let mut r = rng::seeded(1);
        let obs: Vec<GravityObs> = (0..50)
            .map(|_| {
                obs_from(
                    0.0,
                    [1.0, 1.0, 1.0],
                    r.random_range(1e2..1e4),
                    r.random_range(1e2..1e4),
                    r.random_range(10.0..1e3),
                )
            })
            .collect();
        let fit = fit_loglinear_gravity(&obs).unwrap();
        for (got, want) in [
            (fit.ln_alpha, 0.0),
            (fit.beta_gdp_origin, 1.0),
            (fit.beta_gdp_destination, 1.0),
            (fit.beta_distance, 1.0),
        ] {
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
        let o = obs[0];
        let far = GravityObs { distance: 2.0 * o.distance, ..o };
        assert!((fit.predict(&far) / fit.predict(&o) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn loglinear_rejects_degenerate_inputs() {
        let same = vec![GravityObs { gdp_origin: 10.0, gdp_destination: 10.0, distance: 5.0, flow: 3.0 }; 6];
        assert!(matches!(fit_loglinear_gravity(&same), Err(Error::RankDeficient(_))));
        let mut zero = same.clone();
        zero[0].flow = 0.0;
        assert!(matches!(fit_loglinear_gravity(&zero), Err(Error::InvalidInput(_))));
        assert!(fit_loglinear_gravity(&same[..3]).is_err());
    }

    fn intercept_matrix(target: Vec<f64>) -> EncodedMatrix {
        let rows = vec![vec![0]; target.len()];
        EncodedMatrix::new(vec!["CONST".into()], rows, target).unwrap()
    }

    #[test]
    fn intercept_only_fits_the_mean() {
        let target = vec![0.0, 3.0, 10.0, 250.0, 1.5];
        let m = intercept_matrix(target.clone());
        let model = ppml_fit(&m, &PPMLConfig::default()).unwrap();
        let mean = target.iter().sum::<f64>() / 5.0;
        for mu in ppml_predict(&model, &m).unwrap() {
            assert!((mu - mean).abs() <= 1e-8 * mean);
        }
    }

    #[test]
    fn rejects_bad_targets_and_lambda() {
        assert!(ppml_fit(&intercept_matrix(vec![0.0, 0.0]), &PPMLConfig::default()).is_err());
        assert!(ppml_fit(&intercept_matrix(vec![1.0, -1.0]), &PPMLConfig::default()).is_err());
        let m = intercept_matrix(vec![1.0, 2.0]);
        assert!(lasso_ppml_fit(&m, &LassoConfig::new(-1.0)).is_err());
    }

    #[test]
    fn zero_model_predicts_one_and_unknown_levels_fail() {
        let m = EncodedMatrix::new(
            vec!["p".into(), "EXPYEAR:A:2000".into()],
            vec![vec![0, 1], vec![1]],
            vec![1.0, 2.0],
        )
        .unwrap();
        let model = PPMLModel::from_coefficients(&m.columns, &[0.0, 0.0]);
        assert_eq!(ppml_predict(&model, &m).unwrap(), vec![1.0, 1.0]);
        let other = EncodedMatrix::new(vec!["EXPYEAR:B:2000".into()], vec![vec![0]], vec![1.0]).unwrap();
        match ppml_predict(&model, &other) {
            Err(Error::UnknownLevel { kind, level }) => {
                assert_eq!(kind, "exporter-year");
                assert_eq!(level, "B:2000");
            }
            other => panic!("{other:?}"),
        }
    }

    /// Provisions plus exporter-year, importer-year and pair dummies with
    /// flows drawn around the Poisson mean.
    fn simulate(n_countries: usize, n_years: usize, beta: &[f64], seed: u64) -> EncodedMatrix {
        let mut r = rng::seeded(seed);
        let noise = Normal::new(0.0, 0.2).unwrap();
        let small = Normal::new(0.0, 0.3).unwrap();
        let p = beta.len();
        let mut columns: Vec<String> = (0..p).map(|l| format!("prov{l}")).collect();
        let base = columns.len();
        let ey = base;
        let iy = ey + n_countries * n_years;
        let pr = iy + n_countries * n_years;
        for e in 0..n_countries {
            for y in 0..n_years {
                columns.push(format!("EXPYEAR:C{e}:{y}"));
            }
        }
        for i in 0..n_countries {
            for y in 0..n_years {
                columns.push(format!("IMPYEAR:C{i}:{y}"));
            }
        }
        for e in 0..n_countries {
            for i in 0..n_countries {
                columns.push(format!("PAIR:C{e}:C{i}"));
            }
        }
        let effects: Vec<f64> = (0..columns.len())
            .map(|j| if j < base { beta[j] } else { small.sample(&mut r) })
            .collect();
        let mut rows = Vec::new();
        let mut target = Vec::new();
        for e in 0..n_countries {
            for i in 0..n_countries {
                if e == i {
                    continue;
                }
                for y in 0..n_years {
                    let mut row: Vec<usize> = (0..p).filter(|_| r.random_bool(0.5)).collect();
                    row.extend([ey + e * n_years + y, iy + i * n_years + y, pr + e * n_countries + i]);
                    let eta: f64 = 3.0 + row.iter().map(|&j| effects[j]).sum::<f64>();
                    let eps: f64 = noise.sample(&mut r);
                    target.push((eta + eps - 0.02).exp());
                    rows.push(row);
                }
            }
        }
        EncodedMatrix::new(columns, rows, target).unwrap()
    }

    #[test]
    fn stationarity_and_adding_up() {
        let m = simulate(5, 4, &[0.5, -0.3], 2);
        let cfg = PPMLConfig::default();
        let model = ppml_fit(&m, &cfg).unwrap();
        let mu = ppml_predict(&model, &m).unwrap();
        let (sum_mu, sum_x): (f64, f64) = (mu.iter().sum(), m.target.iter().sum());
        assert!(((sum_mu - sum_x) / sum_x).abs() <= 1e-6);
        let mean = sum_x / m.n_rows as f64;
        for j in 0..m.n_cols {
            let score: f64 = m
                .rows
                .iter()
                .zip(mu.iter().zip(&m.target))
                .filter(|(row, _)| row.contains(&j))
                .map(|(_, (u, x))| x - u)
                .sum();
            assert!(score.abs() <= cfg.tolerance * mean * m.n_rows as f64);
        }
    }

    #[test]
    fn fitted_means_invariant_to_fixed_effect_shift() {
        let m = simulate(4, 3, &[0.4], 3);
        let model = ppml_fit(&m, &PPMLConfig::default()).unwrap();
        let mut shifted = model.clone();
        for v in shifted.fe_exporter_year.values_mut() {
            *v += 0.7;
        }
        for v in shifted.fe_importer_year.values_mut() {
            *v -= 0.7;
        }
        let a = ppml_predict(&model, &m).unwrap();
        let b = ppml_predict(&shifted, &m).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-12 * x.abs());
        }
    }

    #[test]
    fn lasso_limits() {
        let m = simulate(5, 4, &[0.5, -0.3, 0.0], 4);
        let plain = ppml_fit(&m, &PPMLConfig::default()).unwrap();
        let zero = lasso_ppml_fit(&m, &LassoConfig::new(0.0)).unwrap();
        let a = ppml_predict(&plain, &m).unwrap();
        let b = ppml_predict(&zero.model, &m).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-8 * x);
        }
        let huge = lasso_ppml_fit(&m, &LassoConfig::new(1e6 * m.n_rows as f64)).unwrap();
        assert!(huge.active_set.is_empty());
        assert!(huge.model.beta.values().all(|&b| b == 0.0));
    }

    #[test]
    fn model_json_layout() {
        let m = simulate(3, 2, &[0.2], 5);
        let model = ppml_fit(&m, &PPMLConfig::default()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&model.to_json().unwrap()).unwrap();
        for key in ["beta", "fe_exporter_year", "fe_importer_year", "fe_pair"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert!(v.get("other").is_none());
        assert_eq!(PPMLModel::from_json(&model.to_json().unwrap()).unwrap(), model);
    }
}
