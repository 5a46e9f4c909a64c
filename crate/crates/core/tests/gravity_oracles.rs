use tradeflow::gravity::{lasso_ppml_fit, ppml_fit, ppml_predict, LassoConfig, PPMLConfig};

mod common;

use common::simulate_gravity;

#[test]
fn beta_recovered_from_simulated_three_way_panel() {
    let beta = [0.4, -0.25, 0.1];
    for seed in 0..3 {
        let sim = simulate_gravity(10, 22, &beta, 100 + seed);
        assert!(sim.n_rows >= 1900);
        let fit = ppml_fit(&sim, &PPMLConfig::default()).unwrap();
        for (l, b) in beta.iter().enumerate() {
            let got = fit.beta[&format!("prov{l}")];
            assert!((got - b).abs() <= 0.05, "seed {seed} prov{l}: {got} vs {b}");
        }
    }
}

#[test]
fn lasso_keeps_true_provisions_and_drops_most_others() {
    let mut beta = vec![0.0; 10];
    beta[1] = 0.5;
    beta[4] = -0.4;
    beta[7] = 0.3;
    for seed in 0..5 {
        let sim = simulate_gravity(8, 12, &beta, 200 + seed);
        let n = sim.n_rows as f64;
        let mean = sim.target.iter().sum::<f64>() / n;
        let fit = lasso_ppml_fit(&sim, &LassoConfig::new(0.01 * n * mean)).unwrap();
        for l in [1, 4, 7] {
            assert!(fit.active_set.contains(&format!("prov{l}")), "seed {seed}: {:?}", fit.active_set);
        }
        assert!(fit.active_set.len() <= 6, "seed {seed}: {:?}", fit.active_set);
    }
}

#[test]
fn lasso_at_zero_penalty_matches_plain_fit() {
    let sim = simulate_gravity(6, 5, &[0.3, 0.0], 7);
    let plain = ppml_predict(&ppml_fit(&sim, &PPMLConfig::default()).unwrap(), &sim).unwrap();
    let lasso = lasso_ppml_fit(&sim, &LassoConfig::new(0.0)).unwrap();
    let mu = ppml_predict(&lasso.model, &sim).unwrap();
    for (a, b) in plain.iter().zip(&mu) {
        assert!((a - b).abs() <= 1e-8 * a);
    }
    assert_eq!(lasso.active_set.len(), 2);
}

#[test]
fn penalty_loadings_are_validated_and_applied() {
    let sim = simulate_gravity(6, 5, &[0.3, 0.3], 8);
    let n = sim.n_rows as f64;
    let mean = sim.target.iter().sum::<f64>() / n;
    let mut cfg = LassoConfig::new(0.5 * n * mean);
    cfg.penalty_loadings = Some(vec![0.0, 1.0]);
    let fit = lasso_ppml_fit(&sim, &cfg).unwrap();
    assert_eq!(fit.active_set, vec!["prov0".to_string()]);
    cfg.penalty_loadings = Some(vec![1.0]);
    assert!(lasso_ppml_fit(&sim, &cfg).is_err());
    cfg.penalty_loadings = Some(vec![1.0, -1.0]);
    assert!(lasso_ppml_fit(&sim, &cfg).is_err());
}

#[test]
fn iteration_cap_reports_gradient_norm() {
    let sim = simulate_gravity(6, 5, &[0.3], 9);
    let cfg = PPMLConfig { max_iters: 1, tolerance: 1e-14 };
    match ppml_fit(&sim, &cfg) {
        Err(tradeflow::Error::NoConvergence { iterations, gradient_norm }) => {
            assert_eq!(iterations, 1);
            assert!(gradient_norm > 0.0);
        }
        other => panic!("{other:?}"),
    }
}
