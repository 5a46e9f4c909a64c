use std::fs;
use std::path::Path;

use tradeflow::dataset::{synth_panel, synth_presence_data, PanelSynthSpec};
use tradeflow::pipeline::{self, PipelineConfig, Stage1Result};
use tradeflow::shapley::global_importance;
use tradeflow::shapley::Estimator;

fn quick_config(seed: u64) -> PipelineConfig {
    let mut c = PipelineConfig::new(seed);
    c.shap.n_permutations = 16;
    c.shap.background_size = 32;
    c.shap.eval_size = 64;
    c
}

#[test]
fn planted_presence_features_rank_high_and_classify_well() {
    let mut hits = 0;
    for seed in 0..5 {
        let (matrix, truth) = synth_presence_data(4000, 30, 5, seed).unwrap();
        let mut cfg = quick_config(seed);
        cfg.k = 10;
        let r = pipeline::stage1_on_matrix(&matrix, &cfg).unwrap();
        assert!(r.test_metrics.accuracy >= 0.9, "seed {seed}: {:?}", r.test_metrics);
        hits += truth
            .active
            .iter()
            .filter(|&&a| r.top_k.iter().any(|e| e.feature == matrix.columns[a]))
            .count();
    }
    assert!(hits as f64 / 5.0 >= 4.0, "{hits} hits over 5 seeds");
}

#[test]
fn global_importance_on_trained_classifier_finds_planted_features() {
    let (matrix, truth) = synth_presence_data(3000, 30, 5, 42).unwrap();
    let model = tradeflow::nnclassifier::train(&matrix, &tradeflow::nnclassifier::TrainConfig::new(42)).unwrap();
    let rows = matrix.dense_rows();
    let bg = tradeflow::shapley::sample_rows(&rows, 32, 1);
    let eval = tradeflow::shapley::sample_rows(&rows, 64, 2);
    let est = Estimator::Permutation { n_permutations: 16, seed: 3 };
    let gi = global_importance(&model, &eval, &bg, &matrix.columns, est).unwrap();
    let top10: Vec<&str> = gi.entries[..10].iter().map(|e| e.feature.as_str()).collect();
    let found = truth.active.iter().filter(|&&a| top10.contains(&matrix.columns[a].as_str())).count();
    assert!(found >= 4, "{found} of 5 in {top10:?}");
    assert!(gi.entries.iter().all(|e| e.importance >= 0.0));
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["stage1", "stage2", ""] {
        let d = dir.join(sub);
        let mut names: Vec<_> = fs::read_dir(&d)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.is_file())
            .collect();
        names.sort();
        for p in names {
            out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
        }
    }
    out
}

#[test]
fn reruns_write_identical_files() {
    let mut spec = PanelSynthSpec::new(8);
    spec.n_countries = 8;
    spec.n_years = 6;
    let (panel, _) = synth_panel(&spec).unwrap();
    let mut snapshots = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = quick_config(8);
        cfg.k = 5;
        cfg.output_dir = Some(dir.path().to_path_buf());
        let s1 = pipeline::run_stage1(&panel, &cfg).unwrap();
        let s2 = pipeline::run_stage2(&panel, &s1, &cfg).unwrap();
        let report = pipeline::run_report(&s1, &s2, dir.path()).unwrap();
        assert_eq!(report.stage1.top_provisions.len(), 5);
        assert_eq!(Stage1Result::load(dir.path()).unwrap(), s1);
        snapshots.push(read_all(dir.path()));
    }
    // the config snapshot embeds the temporary output directory
    let strip = |files: &Vec<(String, Vec<u8>)>| {
        files
            .iter()
            .filter(|(name, _)| !name.ends_with("config.json"))
            .cloned()
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&snapshots[0]), strip(&snapshots[1]));
    assert!(snapshots[0].len() >= 9);
}

#[test]
fn full_ranking_when_k_equals_provision_count() {
    let mut spec = PanelSynthSpec::new(9);
    spec.n_countries = 6;
    spec.n_years = 5;
    spec.n_provisions = 8;
    let (panel, _) = synth_panel(&spec).unwrap();
    let mut cfg = quick_config(9);
    cfg.k = 8;
    let r = pipeline::run_stage1(&panel, &cfg).unwrap();
    assert_eq!(r.top_k, r.importance.entries);
    cfg.k = 9;
    assert!(pipeline::run_stage1(&panel, &cfg).is_err());
}

#[test]
fn planted_interaction_is_positive_and_prominent() {
    let mut top3 = 0;
    for seed in 10..15 {
        let (panel, truth) = synth_panel(&PanelSynthSpec::new(seed)).unwrap();
        let cfg = quick_config(seed);
        let s1 = pipeline::run_stage1(&panel, &cfg).unwrap();
        let s2 = pipeline::run_stage2(&panel, &s1, &cfg).unwrap();
        assert_eq!(s2.heatmap.dim(), 20);
        assert!(s2.test_rmse <= 1.5 * 0.3, "seed {seed}: {}", s2.test_rmse);
        let (a, b) = truth.planted_pair;
        let la = &panel.provision_ids[a];
        let lb = &panel.provision_ids[b];
        let ia = s2.heatmap.labels.iter().position(|l| l == la).unwrap();
        let ib = s2.heatmap.labels.iter().position(|l| l == lb).unwrap();
        let value = s2.heatmap.values[ia][ib];
        let pairs = s2.heatmap.ranked_pairs();
        let rank = pairs
            .iter()
            .position(|&(i, j, _)| (i, j) == (ia.min(ib), ia.max(ib)))
            .unwrap();
        if value > 0.0 && rank < 3 {
            top3 += 1;
        }
    }
    assert!(top3 >= 4, "{top3} of 5 seeds");
}
