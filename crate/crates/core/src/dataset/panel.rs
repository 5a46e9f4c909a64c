use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{key_string, Key, ProvisionTable, TradeFlowRecord};
use crate::{Error, Result};

/// One exporter-importer-year observation of the analysis panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    pub exporter: String,
    pub importer: String,
    pub year: i32,
    pub provisions: Vec<u8>,
    pub flow: f64,
    /// `flow > 0`.
    pub flow_present: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub provision_ids: Vec<String>,
    pub rows: Vec<PanelRow>,
}

impl Panel {
    pub fn n_nonzero(&self) -> usize {
        self.rows.iter().filter(|r| r.flow_present).count()
    }

    pub fn provision_index(&self, id: &str) -> Option<usize> {
        self.provision_ids.iter().position(|p| p == id)
    }

    /// Rows with a positive flow, in panel order.
    pub fn nonzero(&self) -> Panel {
        Panel {
            provision_ids: self.provision_ids.clone(),
            rows: self.rows.iter().filter(|r| r.flow_present).cloned().collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let panel: Panel = serde_json::from_str(s)?;
        let d = panel.provision_ids.len();
        for row in &panel.rows {
            if row.provisions.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: row.provisions.len(),
                });
            }
            if row.flow_present != (row.flow > 0.0) || row.flow < 0.0 {
                return Err(Error::invalid(format!(
                    "row ({}, {}, {}) has inconsistent flow/flow_present",
                    row.exporter, row.importer, row.year
                )));
            }
        }
        Ok(panel)
    }
}

/// Left-joins flows onto provision keys.
///
/// Keys with an agreement but no recorded flow become zero-flow rows; flow
/// records without an agreement are dropped.
pub fn build_panel(flows: &[TradeFlowRecord], provisions: &ProvisionTable) -> Result<Panel> {
    if flows.is_empty() || provisions.records.is_empty() {
        return Err(Error::invalid("build_panel needs nonempty flows and provisions"));
    }

    let mut flow_by_key: HashMap<Key, f64> = HashMap::with_capacity(flows.len());
    for f in flows {
        let key = (f.exporter.clone(), f.importer.clone(), f.year);
        if flow_by_key.insert(key.clone(), f.flow).is_some() {
            return Err(Error::DuplicateKey(format!("{} in flows", key_string(&key))));
        }
    }

    let d = provisions.ids.len();
    let mut seen: HashSet<Key> = HashSet::with_capacity(provisions.records.len());
    let mut rows = Vec::with_capacity(provisions.records.len());
    for p in &provisions.records {
        if p.provisions.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: p.provisions.len(),
            });
        }
        let key = (p.exporter.clone(), p.importer.clone(), p.year);
        let flow = flow_by_key.get(&key).copied().unwrap_or(0.0);
        if !seen.insert(key.clone()) {
            return Err(Error::DuplicateKey(format!("{} in provisions", key_string(&key))));
        }
        rows.push(PanelRow {
            exporter: key.0,
            importer: key.1,
            year: key.2,
            provisions: p.provisions.clone(),
            flow,
            flow_present: flow > 0.0,
        });
    }

    Ok(Panel {
        provision_ids: provisions.ids.clone(),
        rows,
    })
}
