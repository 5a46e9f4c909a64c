//! Small dense helpers for the normal-equation solvers.

use crate::{Error, Result};

/// Lower-triangular Cholesky factor of a symmetric positive-definite
/// matrix (row-major, n×n).
pub(crate) struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// A pivot below `rel_tol * max(diag)` is reported as rank deficiency.
    pub(crate) fn factor(a: &[f64], n: usize, rel_tol: f64) -> Result<Self> {
        debug_assert_eq!(a.len(), n * n);
        let max_diag = (0..n).map(|i| a[i * n + i]).fold(0.0_f64, f64::max);
        let threshold = rel_tol * max_diag.max(f64::MIN_POSITIVE);

        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = a[j * n + j];
            for p in 0..j {
                d -= l[j * n + p] * l[j * n + p];
            }
            if !(d > threshold) {
                return Err(Error::RankDeficient(format!(
                    "pivot {j} is {d:e} (threshold {threshold:e})"
                )));
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in (j + 1)..n {
                let mut s = a[i * n + j];
                for p in 0..j {
                    s -= l[i * n + p] * l[j * n + p];
                }
                l[i * n + j] = s / d;
            }
        }
        Ok(Cholesky { n, l })
    }

    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, l) = (self.n, &self.l);
        debug_assert_eq!(b.len(), n);
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = b[i];
            for p in 0..i {
                s -= l[i * n + p] * y[p];
            }
            y[i] = s / l[i * n + i];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for p in (i + 1)..n {
                s -= l[p * n + i] * x[p];
            }
            x[i] = s / l[i * n + i];
        }
        x
    }
}

/// Solves `a x = b` for a symmetric positive-definite `a`.
pub(crate) fn cholesky_solve(a: &[f64], b: &[f64], n: usize, rel_tol: f64) -> Result<Vec<f64>> {
    Ok(Cholesky::factor(a, n, rel_tol)?.solve(b))
}
