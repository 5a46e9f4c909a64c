use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::EncodedMatrix;
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
    pub stratify: bool,
}

impl SplitSpec {
    /// 80/20 stratified split under `seed`.
    pub fn new(seed: u64) -> Self {
        SplitSpec {
            test_fraction: 0.2,
            seed,
            stratify: true,
        }
    }
}

/// Partitions rows into (train, test). Both parts keep the original row
/// order. Stratification applies only to binary targets.
pub fn split(matrix: &EncodedMatrix, spec: &SplitSpec) -> Result<(EncodedMatrix, EncodedMatrix)> {
    let n = matrix.n_rows;
    if n < 2 {
        return Err(Error::invalid(format!("cannot split {n} row(s)")));
    }
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "test_fraction {} outside (0, 1)",
            spec.test_fraction
        )));
    }

    let mut rng = rng::seeded(spec.seed);
    let groups: Vec<Vec<usize>> = if spec.stratify && matrix.is_binary_target() {
        let (pos, neg): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| matrix.target[i] == 1.0);
        vec![pos, neg]
    } else {
        vec![(0..n).collect()]
    };

    let mut in_test = vec![false; n];
    for mut group in groups {
        let n_test = (spec.test_fraction * group.len() as f64).round() as usize;
        group.shuffle(&mut rng);
        for &i in &group[..n_test] {
            in_test[i] = true;
        }
    }

    let (test_idx, train_idx): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| in_test[i]);
    if test_idx.is_empty() || train_idx.is_empty() {
        return Err(Error::invalid(format!(
            "test_fraction {} leaves an empty part for {n} rows",
            spec.test_fraction
        )));
    }
    Ok((matrix.select_rows(&train_idx), matrix.select_rows(&test_idx)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix(targets: Vec<f64>) -> EncodedMatrix {
        let n = targets.len();
        let rows = (0..n).map(|i| if i % 2 == 0 { vec![0] } else { vec![] }).collect();
        EncodedMatrix::new(vec!["x".into()], rows, targets).unwrap()
    }

    #[test]
    fn deterministic_under_seed() {
        let m = matrix((0..100).map(|i| f64::from(i % 3 == 0)).collect());
        let spec = SplitSpec {
            test_fraction: 0.2,
            seed: 7,
            stratify: false,
        };
        assert_eq!(split(&m, &spec).unwrap(), split(&m, &spec).unwrap());
    }

    #[test]
    fn stratified_ten_rows() {
        let m = matrix(vec![1., 1., 1., 1., 1., 0., 0., 0., 0., 0.]);
        let (train, test) = split(&m, &SplitSpec::new(3)).unwrap();
        assert_eq!(test.n_rows, 2);
        assert_eq!(test.target.iter().filter(|&&y| y == 1.0).count(), 1);
        assert_eq!(train.n_rows, 8);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(split(&matrix(vec![1.0]), &SplitSpec::new(0)).is_err());
        let spec = SplitSpec {
            test_fraction: 0.01,
            seed: 0,
            stratify: false,
        };
        assert!(split(&matrix(vec![1.0, 0.0, 1.0]), &spec).is_err());
        let spec = SplitSpec {
            test_fraction: 1.0,
            seed: 0,
            stratify: false,
        };
        assert!(split(&matrix(vec![1.0, 0.0]), &spec).is_err());
    }

    proptest! {
        #[test]
        fn split_is_a_partition(
            labels in proptest::collection::vec(0u8..2, 4..200),
            frac in 0.1f64..0.9,
            seed in any::<u64>(),
            stratify in any::<bool>(),
        ) {
            let n = labels.len();
            let m = matrix(labels.iter().map(|&l| f64::from(l)).collect());
            let spec = SplitSpec { test_fraction: frac, seed, stratify };
            if let Ok((train, test)) = split(&m, &spec) {
                prop_assert_eq!(train.n_rows + test.n_rows, n);
                let pos = |mm: &EncodedMatrix| mm.target.iter().filter(|&&y| y == 1.0).count();
                prop_assert_eq!(pos(&train) + pos(&test), pos(&m));
                if stratify {
                    let overall = pos(&m) as f64 / n as f64;
                    let expect = overall * test.n_rows as f64;
                    prop_assert!((pos(&test) as f64 - expect).abs() <= 1.0 + 1e-9);
                }
            }
        }
    }
}
