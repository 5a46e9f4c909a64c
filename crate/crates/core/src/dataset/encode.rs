use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::Panel;
use crate::{Error, Result};

/// Regression target produced by [`encode_covariates`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// 1 when the flow is positive, else 0.
    Binary,
    /// Natural log of the flow; requires every flow to be positive.
    LogFlow,
    /// The flow itself, for Poisson fits.
    RawFlow,
}

/// Role of a design column, recovered from its name prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ColumnKind {
    Provision,
    Intercept,
    Exporter,
    Importer,
    Year,
    ExporterYear,
    ImporterYear,
    Pair,
}

pub(crate) const INTERCEPT: &str = "CONST";

impl ColumnKind {
    const PREFIXES: [(&'static str, ColumnKind); 6] = [
        ("EXP:", ColumnKind::Exporter),
        ("IMP:", ColumnKind::Importer),
        ("YEAR:", ColumnKind::Year),
        ("EXPYEAR:", ColumnKind::ExporterYear),
        ("IMPYEAR:", ColumnKind::ImporterYear),
        ("PAIR:", ColumnKind::Pair),
    ];

    /// Splits a column name into its kind and level (the part after the
    /// prefix; the full name for provisions).
    pub fn parse(name: &str) -> (ColumnKind, &str) {
        if name == INTERCEPT {
            return (ColumnKind::Intercept, name);
        }
        for (prefix, kind) in Self::PREFIXES {
            if let Some(level) = name.strip_prefix(prefix) {
                return (kind, level);
            }
        }
        (ColumnKind::Provision, name)
    }

    pub fn is_fixed_effect(self) -> bool {
        !matches!(self, ColumnKind::Provision)
    }
}

/// Sparse binary design matrix. Each row lists the (sorted, distinct)
/// column indices that are 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<usize>>,
    pub target: Vec<f64>,
}

impl EncodedMatrix {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<usize>>, target: Vec<f64>) -> Result<Self> {
        let m = EncodedMatrix {
            n_rows: rows.len(),
            n_cols: columns.len(),
            columns,
            rows,
            target,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.columns.len() != self.n_cols {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols,
                got: self.columns.len(),
            });
        }
        if self.rows.len() != self.n_rows || self.target.len() != self.n_rows {
            return Err(Error::invalid(format!(
                "n_rows = {} but {} rows and {} targets",
                self.n_rows,
                self.rows.len(),
                self.target.len()
            )));
        }
        let mut names = HashSet::with_capacity(self.n_cols);
        for c in &self.columns {
            if !names.insert(c.as_str()) {
                return Err(Error::invalid(format!("duplicate column name '{c}'")));
            }
        }
        for (r, row) in self.rows.iter().enumerate() {
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid(format!("row {r} indices not strictly increasing")));
            }
            if let Some(&c) = row.last() {
                if c >= self.n_cols {
                    return Err(Error::invalid(format!("row {r} references column {c}")));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: EncodedMatrix = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn dense_row(&self, i: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.n_cols];
        for &c in &self.rows[i] {
            x[c] = 1.0;
        }
        x
    }

    pub fn dense_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows).map(|i| self.dense_row(i)).collect()
    }

    pub fn is_binary_target(&self) -> bool {
        self.target.iter().all(|&y| y == 0.0 || y == 1.0)
    }

    /// Rows at `indices`, in the given order, with all columns kept.
    pub fn select_rows(&self, indices: &[usize]) -> EncodedMatrix {
        EncodedMatrix {
            n_rows: indices.len(),
            n_cols: self.n_cols,
            columns: self.columns.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            target: indices.iter().map(|&i| self.target[i]).collect(),
        }
    }
}

fn target_value(flow: f64, target: Target) -> f64 {
    match target {
        Target::Binary => f64::from(u8::from(flow > 0.0)),
        Target::LogFlow => flow.ln(),
        Target::RawFlow => flow,
    }
}

fn provision_positions(panel: &Panel, subset: &[String]) -> Result<Vec<usize>> {
    let index: HashMap<&str, usize> = panel
        .provision_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut seen = HashSet::new();
    subset
        .iter()
        .map(|id| {
            if !seen.insert(id.as_str()) {
                return Err(Error::invalid(format!("provision '{id}' selected twice")));
            }
            index
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::invalid(format!("provision '{id}' not in panel")))
        })
        .collect()
}

fn check_target(panel: &Panel, target: Target) -> Result<()> {
    if target == Target::LogFlow {
        if let Some(r) = panel.rows.iter().find(|r| r.flow <= 0.0) {
            return Err(Error::invalid(format!(
                "log_flow target with zero flow at ({}, {}, {})",
                r.exporter, r.importer, r.year
            )));
        }
    }
    Ok(())
}

/// Encodes the chosen provisions, optionally followed by one-hot exporter,
/// importer and year dummies (levels sorted within each block).
pub fn encode_covariates(
    panel: &Panel,
    provision_subset: &[String],
    include_fixed_effects: bool,
    target: Target,
) -> Result<EncodedMatrix> {
    check_target(panel, target)?;
    let positions = provision_positions(panel, provision_subset)?;
    let mut columns: Vec<String> = provision_subset.to_vec();

    let mut blocks: Vec<HashMap<String, usize>> = Vec::new();
    if include_fixed_effects {
        let exporters: BTreeSet<&str> = panel.rows.iter().map(|r| r.exporter.as_str()).collect();
        let importers: BTreeSet<&str> = panel.rows.iter().map(|r| r.importer.as_str()).collect();
        let years: BTreeSet<i32> = panel.rows.iter().map(|r| r.year).collect();
        let levels: [Vec<String>; 3] = [
            exporters.into_iter().map(str::to_string).collect(),
            importers.into_iter().map(str::to_string).collect(),
            years.into_iter().map(|y| y.to_string()).collect(),
        ];
        for (prefix, levels) in ["EXP:", "IMP:", "YEAR:"].iter().zip(levels) {
            let mut map = HashMap::with_capacity(levels.len());
            for level in levels {
                map.insert(level.clone(), columns.len());
                columns.push(format!("{prefix}{level}"));
            }
            blocks.push(map);
        }
    }

    let mut rows = Vec::with_capacity(panel.rows.len());
    let mut targets = Vec::with_capacity(panel.rows.len());
    for r in &panel.rows {
        let mut set: Vec<usize> = positions
            .iter()
            .enumerate()
            .filter(|&(_, &p)| r.provisions[p] == 1)
            .map(|(col, _)| col)
            .collect();
        if include_fixed_effects {
            set.push(blocks[0][&r.exporter]);
            set.push(blocks[1][&r.importer]);
            set.push(blocks[2][&r.year.to_string()]);
        }
        rows.push(set);
        targets.push(target_value(r.flow, target));
    }
    EncodedMatrix::new(columns, rows, targets)
}

/// Design for the three-way gravity model: provisions, then exporter-year,
/// importer-year and exporter-importer pair dummies, with the raw flow as
/// target. `intercept` prepends a constant column.
pub fn encode_three_way(
    panel: &Panel,
    provision_subset: &[String],
    intercept: bool,
) -> Result<EncodedMatrix> {
    let positions = provision_positions(panel, provision_subset)?;
    let mut columns: Vec<String> = Vec::new();
    if intercept {
        columns.push(INTERCEPT.to_string());
    }
    let first_provision = columns.len();
    columns.extend(provision_subset.iter().cloned());

    let exp_year: BTreeSet<String> = panel
        .rows
        .iter()
        .map(|r| format!("{}:{}", r.exporter, r.year))
        .collect();
    let imp_year: BTreeSet<String> = panel
        .rows
        .iter()
        .map(|r| format!("{}:{}", r.importer, r.year))
        .collect();
    let pairs: BTreeSet<String> = panel
        .rows
        .iter()
        .map(|r| format!("{}:{}", r.exporter, r.importer))
        .collect();
    let mut lookup: [HashMap<String, usize>; 3] = Default::default();
    for (slot, (prefix, levels)) in [("EXPYEAR:", exp_year), ("IMPYEAR:", imp_year), ("PAIR:", pairs)]
        .into_iter()
        .enumerate()
    {
        for level in levels {
            lookup[slot].insert(level.clone(), columns.len());
            columns.push(format!("{prefix}{level}"));
        }
    }

    let mut rows = Vec::with_capacity(panel.rows.len());
    let mut targets = Vec::with_capacity(panel.rows.len());
    for r in &panel.rows {
        let mut set = Vec::new();
        if intercept {
            set.push(0);
        }
        set.extend(
            positions
                .iter()
                .enumerate()
                .filter(|&(_, &p)| r.provisions[p] == 1)
                .map(|(j, _)| first_provision + j),
        );
        set.push(lookup[0][&format!("{}:{}", r.exporter, r.year)]);
        set.push(lookup[1][&format!("{}:{}", r.importer, r.year)]);
        set.push(lookup[2][&format!("{}:{}", r.exporter, r.importer)]);
        rows.push(set);
        targets.push(r.flow);
    }
    EncodedMatrix::new(columns, rows, targets)
}
