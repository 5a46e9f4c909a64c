use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use tradeflow::dataset::EncodedMatrix;

/// Three-way panel with provisions drawn per row and Poisson flows.
pub fn simulate_gravity(n_countries: usize, n_years: usize, beta: &[f64], seed: u64) -> EncodedMatrix {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let small = Normal::new(0.0, 0.2).unwrap();
    let p = beta.len();
    let mut columns: Vec<String> = (0..p).map(|l| format!("prov{l}")).collect();
    let mut effects: Vec<f64> = beta.to_vec();
    let mut index = HashMap::new();
    let countries: Vec<String> = (0..n_countries).map(|c| format!("C{c:02}")).collect();
    let mut add = |name: String, columns: &mut Vec<String>, effects: &mut Vec<f64>, r: &mut ChaCha8Rng| {
        index.insert(name.clone(), columns.len());
        columns.push(name);
        effects.push(small.sample(r));
    };
    for c in &countries {
        for y in 0..n_years {
            add(format!("EXPYEAR:{c}:{y}"), &mut columns, &mut effects, &mut r);
            add(format!("IMPYEAR:{c}:{y}"), &mut columns, &mut effects, &mut r);
        }
        for c2 in &countries {
            if c != c2 {
                add(format!("PAIR:{c}:{c2}"), &mut columns, &mut effects, &mut r);
            }
        }
    }
    let mut order: Vec<usize> = (0..columns.len()).collect();
    order.sort_by(|&a, &b| columns[a].cmp(&columns[b]));
    let mut rank = vec![0; columns.len()];
    for (pos, &c) in order.iter().enumerate() {
        rank[c] = pos;
    }
    let mut rows = Vec::new();
    let mut target = Vec::new();
    for e in &countries {
        for i in &countries {
            if e == i {
                continue;
            }
            for y in 0..n_years {
                let mut row: Vec<usize> = (0..p).filter(|_| r.random_bool(0.5)).collect();
                row.push(index[&format!("EXPYEAR:{e}:{y}")]);
                row.push(index[&format!("IMPYEAR:{i}:{y}")]);
                row.push(index[&format!("PAIR:{e}:{i}")]);
                let eta = 4.0 + row.iter().map(|&j| effects[j]).sum::<f64>();
                let mut sorted: Vec<usize> = row.iter().map(|&j| rank[j]).collect();
                sorted.sort_unstable();
                rows.push(sorted);
                target.push(Poisson::new(eta.exp()).unwrap().sample(&mut r));
            }
        }
    }
    let sorted_columns = order.iter().map(|&c| columns[c].clone()).collect();
    EncodedMatrix::new(sorted_columns, rows, target).unwrap()
}

