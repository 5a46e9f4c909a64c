//! Two-stage analysis: which provisions predict whether trade happens, and
//! how the selected provisions interact in the volume of trade that does.
//!
//! Output directory layout:
//!
//! ```text
//! stage1/metrics.json  stage1/importance.json  stage1/summary.csv
//! stage1/model.json    stage1/config.json
//! stage2/metrics.json  stage2/model.json       stage2/heatmap.csv
//! report.json
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dataset::{encode_covariates, split, EncodedMatrix, Panel, SplitSpec, Target};
use crate::fm::{self, FMModel, FMTrainConfig, InteractionMatrix};
use crate::nnclassifier::{self, MLPParams, Metrics, TrainConfig};
use crate::shapley::{
    self, Estimator, GlobalImportance, ImportanceEntry, SummaryRow,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapMethod {
    Exact,
    Permutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapConfig {
    #[serde(default = "default_method")]
    pub method: ShapMethod,
    #[serde(default = "default_n_permutations")]
    pub n_permutations: usize,
    /// Training rows sampled as the reference population.
    #[serde(default = "default_background_size")]
    pub background_size: usize,
    /// Training rows whose attributions are averaged.
    #[serde(default = "default_eval_size")]
    pub eval_size: usize,
    pub seed: u64,
}

fn default_method() -> ShapMethod {
    ShapMethod::Permutation
}
fn default_n_permutations() -> usize {
    64
}
fn default_background_size() -> usize {
    128
}
fn default_eval_size() -> usize {
    256
}
fn default_k() -> usize {
    20
}

impl ShapConfig {
    pub fn new(seed: u64) -> Self {
        ShapConfig {
            method: default_method(),
            n_permutations: default_n_permutations(),
            background_size: default_background_size(),
            eval_size: default_eval_size(),
            seed,
        }
    }

    fn estimator(&self) -> Estimator {
        match self.method {
            ShapMethod::Exact => Estimator::Exact,
            ShapMethod::Permutation => Estimator::Permutation {
                n_permutations: self.n_permutations,
                seed: self.seed,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_k")]
    pub k: usize,
    pub split: SplitSpec,
    pub mlp: TrainConfig,
    pub shap: ShapConfig,
    pub fm: FMTrainConfig,
    /// Artifacts are written here when set.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl PipelineConfig {
    /// Defaults throughout, with every seed set to `seed`.
    pub fn new(seed: u64) -> Self {
        PipelineConfig {
            k: default_k(),
            split: SplitSpec::new(seed),
            mlp: TrainConfig::new(seed),
            shap: ShapConfig::new(seed),
            fm: FMTrainConfig::new(seed),
            output_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("k must be >= 1"));
        }
        if self.shap.background_size == 0 || self.shap.eval_size == 0 {
            return Err(Error::invalid("shap background_size and eval_size must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Result {
    pub model: MLPParams,
    pub train_metrics: Metrics,
    pub test_metrics: Metrics,
    pub importance: GlobalImportance,
    pub k: usize,
    pub top_k: Vec<ImportanceEntry>,
    pub summary: Vec<SummaryRow>,
    pub config: PipelineConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Stage1Metrics {
    train: Metrics,
    test: Metrics,
    k: usize,
    top_k: Vec<ImportanceEntry>,
}

impl Stage1Result {
    pub fn top_k_ids(&self) -> Vec<String> {
        self.top_k.iter().map(|e| e.feature.clone()).collect()
    }

    fn save(&self, root: &Path) -> Result<()> {
        let dir = root.join("stage1");
        create_dir(&dir)?;
        let metrics = Stage1Metrics {
            train: self.train_metrics,
            test: self.test_metrics,
            k: self.k,
            top_k: self.top_k.clone(),
        };
        write_json(&dir.join("metrics.json"), &metrics)?;
        write_json(&dir.join("importance.json"), &self.importance)?;
        write_json(&dir.join("config.json"), &self.config)?;
        write_text(&dir.join("model.json"), &self.model.to_json()?)?;
        shapley::write_summary(&self.summary, dir.join("summary.csv"))
    }

    /// Reads the stage-1 artifacts under `root`.
    pub fn load(root: impl AsRef<Path>) -> Result<Self> {
        let dir = root.as_ref().join("stage1");
        let metrics: Stage1Metrics = read_json(&dir.join("metrics.json"))?;
        let summary_path = dir.join("summary.csv");
        Ok(Stage1Result {
            model: MLPParams::from_json(&read_text(&dir.join("model.json"))?)?,
            train_metrics: metrics.train,
            test_metrics: metrics.test,
            importance: read_json(&dir.join("importance.json"))?,
            k: metrics.k,
            top_k: metrics.top_k,
            summary: shapley::read_summary(require(&summary_path)?)?,
            config: read_json(&dir.join("config.json"))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Result {
    pub model: FMModel,
    pub train_rmse: f64,
    /// RMSE of ln(flow) on the held-out split.
    pub test_rmse: f64,
    pub heatmap: InteractionMatrix,
    /// Nonzero-flow rows used (train plus test).
    pub n_rows: usize,
    pub provisions: Vec<String>,
    pub config: PipelineConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Stage2Metrics {
    n_rows: usize,
    train_rmse: f64,
    test_rmse: f64,
    provisions: Vec<String>,
}

impl Stage2Result {
    fn save(&self, root: &Path) -> Result<()> {
        let dir = root.join("stage2");
        create_dir(&dir)?;
        let metrics = Stage2Metrics {
            n_rows: self.n_rows,
            train_rmse: self.train_rmse,
            test_rmse: self.test_rmse,
            provisions: self.provisions.clone(),
        };
        write_json(&dir.join("metrics.json"), &metrics)?;
        write_text(&dir.join("model.json"), &self.model.to_json()?)?;
        write_text(&dir.join("heatmap.csv"), &self.heatmap.to_csv()?)
    }

    /// Reads the stage-2 artifacts under `root`; the config snapshot comes
    /// from stage 1.
    pub fn load(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref();
        let dir = root.join("stage2");
        let metrics: Stage2Metrics = read_json(&dir.join("metrics.json"))?;
        let config: PipelineConfig = read_json(&root.join("stage1").join("config.json"))?;
        Ok(Stage2Result {
            model: FMModel::from_json(&read_text(&dir.join("model.json"))?)?,
            train_rmse: metrics.train_rmse,
            test_rmse: metrics.test_rmse,
            heatmap: InteractionMatrix::from_csv(&read_text(&dir.join("heatmap.csv"))?)?,
            n_rows: metrics.n_rows,
            provisions: metrics.provisions,
            config,
        })
    }
}

/// Stage 1 on an already encoded binary design whose columns are the
/// candidate provisions. Nothing is written to disk.
pub fn stage1_on_matrix(matrix: &EncodedMatrix, config: &PipelineConfig) -> Result<Stage1Result> {
    config.validate()?;
    if !matrix.is_binary_target() {
        return Err(Error::invalid("stage 1 needs a 0/1 target"));
    }
    let positives = matrix.target.iter().filter(|&&y| y == 1.0).count();
    if positives == 0 || positives == matrix.n_rows {
        return Err(Error::invalid(
            "stage 1 needs both zero and nonzero flows; the panel has a single class",
        ));
    }
    if config.k > matrix.n_cols {
        return Err(Error::invalid(format!(
            "k = {} exceeds the {} provisions",
            config.k, matrix.n_cols
        )));
    }

    let (train, test) = split(matrix, &config.split)?;
    let model = nnclassifier::train(&train, &config.mlp)?;
    let train_metrics = nnclassifier::evaluate(&model, &train)?;
    let test_metrics = nnclassifier::evaluate(&model, &test)?;

    let train_rows = train.dense_rows();
    let background = shapley::sample_rows(&train_rows, config.shap.background_size, config.shap.seed);
    let eval_rows = shapley::sample_rows(
        &train_rows,
        config.shap.eval_size,
        config.shap.seed.wrapping_add(1),
    );
    let attributions =
        shapley::attribute_rows(&model, &eval_rows, &background, config.shap.estimator())?;
    let importance = GlobalImportance::from_attributions(&attributions, &matrix.columns)?;
    let top_k = importance.top_k(config.k)?;
    let summary = shapley::summary_rows(&attributions, &matrix.columns)?;

    Ok(Stage1Result {
        model,
        train_metrics,
        test_metrics,
        importance,
        k: config.k,
        top_k,
        summary,
        config: config.clone(),
    })
}

/// Binarizes flows, trains the classifier on provisions only and ranks the
/// provisions by mean absolute SHAP value.
pub fn run_stage1(panel: &Panel, config: &PipelineConfig) -> Result<Stage1Result> {
    if panel.rows.is_empty() {
        return Err(Error::invalid("panel is empty"));
    }
    let matrix = encode_covariates(panel, &panel.provision_ids, false, Target::Binary)?;
    let result = stage1_on_matrix(&matrix, config)?;
    if let Some(dir) = &config.output_dir {
        result.save(dir)?;
    }
    Ok(result)
}

/// Minimum nonzero-flow rows for stage 2.
pub const MIN_STAGE2_ROWS: usize = 10;

/// Fits the FM to ln(flow) on nonzero flows with the stage-1 provisions and
/// exporter, importer and year dummies.
pub fn run_stage2(panel: &Panel, stage1: &Stage1Result, config: &PipelineConfig) -> Result<Stage2Result> {
    config.validate()?;
    let nonzero = panel.nonzero();
    if nonzero.rows.len() < MIN_STAGE2_ROWS {
        return Err(Error::invalid(format!(
            "stage 2 needs at least {MIN_STAGE2_ROWS} nonzero flows, the panel has {}",
            nonzero.rows.len()
        )));
    }
    let provisions = stage1.top_k_ids();
    if let Some(p) = provisions.iter().find(|p| panel.provision_index(p).is_none()) {
        return Err(Error::invalid(format!(
            "stage-1 provision '{p}' is not in the panel"
        )));
    }
    let matrix = encode_covariates(&nonzero, &provisions, true, Target::LogFlow)?;
    let (train, test) = split(&matrix, &config.split)?;
    let model = fm::train(&train, &config.fm)?;
    let train_rmse = fm::rmse(&model, &train)?;
    let test_rmse = fm::rmse(&model, &test)?;
    let k = provisions.len();
    let heatmap = fm::interaction_matrix(&model, matrix.columns.clone())?
        .restrict(&(0..k).collect::<Vec<_>>());

    let result = Stage2Result {
        model,
        train_rmse,
        test_rmse,
        heatmap,
        n_rows: matrix.n_rows,
        provisions,
        config: config.clone(),
    };
    if let Some(dir) = &config.output_dir {
        result.save(dir)?;
    }
    Ok(result)
}

/// Attribution of a single provision for one panel row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub provision_id: String,
    pub present: bool,
    pub shap_value: f64,
    pub std_error: f64,
}

/// Stage-1 attribution of one panel row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowExplanation {
    pub row: usize,
    pub exporter: String,
    pub importer: String,
    pub year: i32,
    pub flow_present: bool,
    pub probability: f64,
    pub base_value: f64,
    pub contributions: Vec<Contribution>,
}

/// Explains the stage-1 prediction for `panel.rows[row]` against the same
/// background sample stage 1 used.
pub fn explain_row(panel: &Panel, stage1: &Stage1Result, row: usize) -> Result<RowExplanation> {
    let config = &stage1.config;
    let r = panel.rows.get(row).ok_or_else(|| {
        Error::invalid(format!("row {row} is out of range for a panel of {} rows", panel.rows.len()))
    })?;
    if stage1.model.input_dim() != panel.provision_ids.len() {
        return Err(Error::DimensionMismatch {
            expected: stage1.model.input_dim(),
            got: panel.provision_ids.len(),
        });
    }
    let matrix = encode_covariates(panel, &panel.provision_ids, false, Target::Binary)?;
    let (train, _) = split(&matrix, &config.split)?;
    let background =
        shapley::sample_rows(&train.dense_rows(), config.shap.background_size, config.shap.seed);
    let x = matrix.dense_row(row);
    let attribution = shapley::attribute_rows(
        &stage1.model,
        std::slice::from_ref(&x),
        &background,
        config.shap.estimator(),
    )?
    .remove(0);
    let contributions = panel
        .provision_ids
        .iter()
        .zip(&attribution.values)
        .zip(&attribution.std_errors)
        .zip(&x)
        .map(|(((id, &v), &se), &xi)| Contribution {
            provision_id: id.clone(),
            present: xi == 1.0,
            shap_value: v,
            std_error: se,
        })
        .collect();
    Ok(RowExplanation {
        row,
        exporter: r.exporter.clone(),
        importer: r.importer.clone(),
        year: r.year,
        flow_present: r.flow_present,
        probability: stage1.model.probability(&x),
        base_value: attribution.base_value,
        contributions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvisionRow {
    pub provision_id: String,
    pub importance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Report {
    pub train: Metrics,
    pub test: Metrics,
    pub k: usize,
    pub top_provisions: Vec<ProvisionRow>,
    pub summary_csv: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Report {
    pub n_rows: usize,
    pub train_rmse: f64,
    pub held_out_rmse: f64,
    pub provisions: Vec<String>,
    /// Provision pairs by descending absolute interaction.
    pub strongest_interactions: Vec<InteractionRow>,
    pub heatmap_csv: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRow {
    pub first: String,
    pub second: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub stage1: Stage1Report,
    pub stage2: Stage2Report,
}

const SUMMARY_CSV: &str = "stage1/summary.csv";
const HEATMAP_CSV: &str = "stage2/heatmap.csv";
const REPORTED_INTERACTIONS: usize = 10;

/// Writes `report.json` plus the summary and heatmap CSVs under `dir`.
pub fn run_report(stage1: &Stage1Result, stage2: &Stage2Result, dir: impl AsRef<Path>) -> Result<Report> {
    let dir = dir.as_ref();
    let h = &stage2.heatmap;
    let report = Report {
        stage1: Stage1Report {
            train: stage1.train_metrics,
            test: stage1.test_metrics,
            k: stage1.k,
            top_provisions: stage1
                .top_k
                .iter()
                .map(|e| ProvisionRow {
                    provision_id: e.feature.clone(),
                    importance: e.importance,
                })
                .collect(),
            summary_csv: SUMMARY_CSV.to_string(),
        },
        stage2: Stage2Report {
            n_rows: stage2.n_rows,
            train_rmse: stage2.train_rmse,
            held_out_rmse: stage2.test_rmse,
            provisions: stage2.provisions.clone(),
            strongest_interactions: h
                .ranked_pairs()
                .into_iter()
                .take(REPORTED_INTERACTIONS)
                .map(|(i, j, value)| InteractionRow {
                    first: h.labels[i].clone(),
                    second: h.labels[j].clone(),
                    value,
                })
                .collect(),
            heatmap_csv: HEATMAP_CSV.to_string(),
        },
    };
    create_dir(&dir.join("stage1"))?;
    create_dir(&dir.join("stage2"))?;
    shapley::write_summary(&stage1.summary, dir.join(SUMMARY_CSV))?;
    write_text(&dir.join(HEATMAP_CSV), &h.to_csv()?)?;
    write_json(&dir.join("report.json"), &report)?;
    Ok(report)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn require(path: &Path) -> Result<&Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingArtifact(path.to_path_buf()))
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(require(path)?).map_err(|e| Error::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?)
        .map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synth_panel, PanelRow, PanelSynthSpec};

    fn small_config(seed: u64) -> PipelineConfig {
        let mut c = PipelineConfig::new(seed);
        c.mlp.hidden_sizes = vec![16];
        c.mlp.epochs = 20;
        c.shap.n_permutations = 8;
        c.shap.background_size = 16;
        c.shap.eval_size = 16;
        c.fm.k = 4;
        c.fm.epochs = 10;
        c
    }

    fn small_panel(seed: u64) -> Panel {
        let mut spec = PanelSynthSpec::new(seed);
        spec.n_countries = 6;
        spec.n_years = 4;
        spec.n_provisions = 6;
        spec.n_presence_active = 2;
        synth_panel(&spec).unwrap().0
    }

    #[test]
    fn stage1_checks_k_and_classes() {
        let panel = small_panel(1);
        let mut cfg = small_config(1);
        cfg.k = 7;
        assert!(run_stage1(&panel, &cfg).is_err());
        cfg.k = 6;
        let r = run_stage1(&panel, &cfg).unwrap();
        assert_eq!(r.top_k.len(), 6);
        assert_eq!(r.top_k, r.importance.entries);

        let mut flat = panel.clone();
        for row in &mut flat.rows {
            row.flow = 1.0;
            row.flow_present = true;
        }
        assert!(run_stage1(&flat, &cfg).is_err());
    }

    #[test]
    fn constant_provision_has_zero_importance() {
        let mut panel = small_panel(2);
        for row in &mut panel.rows {
            row.provisions[3] = 1;
        }
        let mut cfg = small_config(2);
        cfg.k = 6;
        let r = run_stage1(&panel, &cfg).unwrap();
        assert_eq!(r.importance.importance_of(&panel.provision_ids[3]), Some(0.0));
    }

    #[test]
    fn stage2_uses_top_k_and_nonzero_rows() {
        let panel = small_panel(3);
        let mut cfg = small_config(3);
        cfg.k = 3;
        let s1 = run_stage1(&panel, &cfg).unwrap();
        let s2 = run_stage2(&panel, &s1, &cfg).unwrap();
        assert_eq!(s2.provisions, s1.top_k_ids());
        assert_eq!(s2.heatmap.labels, s1.top_k_ids());
        assert_eq!(s2.heatmap.dim(), 3);
        assert_eq!(s2.n_rows, panel.n_nonzero());
    }

    #[test]
    fn row_explanation_adds_up_to_prediction() {
        let panel = small_panel(5);
        let mut cfg = small_config(5);
        cfg.k = 2;
        let s1 = run_stage1(&panel, &cfg).unwrap();
        let e = explain_row(&panel, &s1, 3).unwrap();
        assert_eq!(e.contributions.len(), 6);
        assert_eq!((e.exporter.as_str(), e.year), (panel.rows[3].exporter.as_str(), panel.rows[3].year));
        let total: f64 = e.contributions.iter().map(|c| c.shap_value).sum();
        assert!((total - (e.probability - e.base_value)).abs() < 1e-9);
        assert_eq!(explain_row(&panel, &s1, 3).unwrap(), e);
        assert!(explain_row(&panel, &s1, panel.rows.len()).is_err());
    }

    #[test]
    fn stage2_needs_enough_nonzero_rows() {
        let panel = small_panel(4);
        let mut cfg = small_config(4);
        cfg.k = 2;
        let s1 = run_stage1(&panel, &cfg).unwrap();
        let mut sparse = panel.clone();
        let mut kept = 0;
        for row in &mut sparse.rows {
            if row.flow > 0.0 {
                kept += 1;
                if kept > 5 {
                    row.flow = 0.0;
                    row.flow_present = false;
                }
            }
        }
        assert!(run_stage2(&sparse, &s1, &cfg).is_err());

        let mut renamed = s1.clone();
        renamed.top_k[0].feature = "missing".into();
        assert!(run_stage2(&panel, &renamed, &cfg).is_err());
    }

    #[test]
    fn artifacts_round_trip_and_report() {
        let panel = small_panel(5);
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(5);
        cfg.k = 4;
        cfg.output_dir = Some(dir.path().to_path_buf());
        assert!(matches!(
            Stage1Result::load(dir.path()),
            Err(Error::MissingArtifact(_))
        ));
        let s1 = run_stage1(&panel, &cfg).unwrap();
        assert_eq!(Stage1Result::load(dir.path()).unwrap(), s1);
        let s2 = run_stage2(&panel, &s1, &cfg).unwrap();
        assert_eq!(Stage2Result::load(dir.path()).unwrap(), s2);

        let report = run_report(&s1, &s2, dir.path()).unwrap();
        assert_eq!(report.stage1.top_provisions.len(), 4);
        let text = fs::read_to_string(dir.path().join("report.json")).unwrap();
        let back: Report = serde_json::from_str(&text).unwrap();
        assert_eq!(back, report);
        let heat = InteractionMatrix::from_csv(
            &fs::read_to_string(dir.path().join("stage2/heatmap.csv")).unwrap(),
        )
        .unwrap();
        for i in 0..heat.dim() {
            for j in 0..heat.dim() {
                assert_eq!(heat.values[i][j], heat.values[j][i]);
            }
        }
        assert!(run_report(&s1, &s2, dir.path().join("report.json/nested")).is_err());
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let mut v = serde_json::to_value(PipelineConfig::new(1)).unwrap();
        v["bogus"] = serde_json::json!(1);
        assert!(serde_json::from_value::<PipelineConfig>(v).is_err());
        let row = PanelRow {
            exporter: "A".into(),
            importer: "B".into(),
            year: 2000,
            provisions: vec![1],
            flow: 0.0,
            flow_present: false,
        };
        let empty = Panel { provision_ids: vec!["p".into()], rows: vec![] };
        assert!(run_stage1(&empty, &PipelineConfig::new(1)).is_err());
        let one = Panel { provision_ids: vec!["p".into()], rows: vec![row] };
        assert!(run_stage1(&one, &PipelineConfig::new(1)).is_err());
    }
}
