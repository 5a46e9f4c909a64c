use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use tradeflow::dataset::PanelSynthSpec;
use tradeflow::gravity::{LassoConfig, PPMLConfig};
use tradeflow::pipeline::PipelineConfig;

/// A bad config file or a missing setting. Maps to exit code 2.
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn missing(key: &str) -> anyhow::Error {
    InputError(format!("config key `{key}` is required for this command")).into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    /// Serialized panel written by `ingest` or `synth panel`.
    pub panel: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub pipeline: Option<PipelineConfig>,
    #[serde(default)]
    pub synth: SynthSection,
    #[serde(default)]
    pub baseline: BaselineSection,
    pub explain: Option<ExplainSection>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub fm: Option<FmSynth>,
    pub presence: Option<PresenceSynth>,
    pub panel: Option<PanelSynthSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FmSynth {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresenceSynth {
    pub n: usize,
    pub d: usize,
    pub n_active: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    /// `gdp_origin,gdp_destination,distance,flow` rows for the OLS model.
    pub gravity_csv: Option<PathBuf>,
    pub ppml: Option<PPMLConfig>,
    pub lasso: Option<LassoConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainSection {
    pub row: usize,
}

impl CliConfig {
    /// Parses `path`; relative paths inside are taken relative to the
    /// directory holding the file.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| InputError(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: CliConfig = toml::from_str(&text)
            .map_err(|e| InputError(format!("invalid config {}: {e}", path.display())))?;
        if cfg.pipeline.as_ref().is_some_and(|p| p.output_dir.is_some()) {
            return Err(InputError(
                "set `output_dir` at the top level of the config, not under [pipeline]".into(),
            )
            .into());
        }
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        resolve(&mut cfg.panel);
        resolve(&mut cfg.output_dir);
        resolve(&mut cfg.baseline.gravity_csv);
        Ok(cfg)
    }

    pub fn panel_path(&self) -> anyhow::Result<&Path> {
        self.panel.as_deref().ok_or_else(|| missing("panel"))
    }

    pub fn output_dir(&self) -> anyhow::Result<&Path> {
        self.output_dir.as_deref().ok_or_else(|| missing("output_dir"))
    }

    /// The `[pipeline]` table with `output_dir` filled in and validated.
    pub fn pipeline(&self) -> anyhow::Result<PipelineConfig> {
        let mut p = self.pipeline.clone().ok_or_else(|| missing("pipeline"))?;
        p.output_dir = Some(self.output_dir()?.to_path_buf());
        p.validate()?;
        Ok(p)
    }
}
