//! Trade panel ingestion, design-matrix encoding, splitting and synthetic
//! data with planted ground truth.

mod encode;
mod ingest;
mod panel;
mod split;
mod synth;

pub use encode::{encode_covariates, encode_three_way, ColumnKind, EncodedMatrix, Target};
pub use ingest::{load_flows_csv, load_gravity_csv, load_provisions_csv};
pub use panel::{build_panel, Panel, PanelRow};
pub use split::{split, SplitSpec};
pub use synth::{
    synth_fm_data, synth_panel, synth_presence_data, PanelSynthSpec, PanelTruth, PresenceTruth,
};

use serde::{Deserialize, Serialize};

/// Observed exports from `exporter` to `importer` in `year`, in nominal USD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeFlowRecord {
    pub exporter: String,
    pub importer: String,
    pub year: i32,
    pub flow: f64,
}

/// Binary provision vector of the agreement in force for one
/// exporter-importer-year key. Identifiers live on [`ProvisionTable`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvisionRecord {
    pub exporter: String,
    pub importer: String,
    pub year: i32,
    pub provisions: Vec<u8>,
}

/// Provision records sharing one ordered list of provision identifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvisionTable {
    pub ids: Vec<String>,
    pub records: Vec<ProvisionRecord>,
}

pub(crate) type Key = (String, String, i32);

pub(crate) fn key_string(k: &Key) -> String {
    format!("({}, {}, {})", k.0, k.1, k.2)
}
