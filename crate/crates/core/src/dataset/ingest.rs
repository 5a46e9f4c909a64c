use std::collections::HashSet;
use std::fs::File;
use std::path::Path;

use super::{ProvisionRecord, ProvisionTable, TradeFlowRecord};
use crate::gravity::GravityObs;
use crate::{Error, Result};

const FLOW_HEADER: [&str; 4] = ["exporter", "importer", "year", "flow"];
const KEY_HEADER: [&str; 3] = ["exporter", "importer", "year"];
const GRAVITY_HEADER: [&str; 4] = ["gdp_origin", "gdp_destination", "distance", "flow"];

fn open(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(file))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{kind:?}"),
        },
    }
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_key(
    path: &Path,
    line: u64,
    rec: &csv::StringRecord,
) -> Result<(String, String, i32)> {
    let exporter = rec[0].to_string();
    let importer = rec[1].to_string();
    if exporter.is_empty() || importer.is_empty() {
        return Err(parse_err(path, line, "empty country code"));
    }
    if exporter == importer {
        return Err(parse_err(
            path,
            line,
            format!("exporter and importer are both '{exporter}'"),
        ));
    }
    let year = rec[2]
        .parse::<i32>()
        .map_err(|_| parse_err(path, line, format!("invalid year '{}'", &rec[2])))?;
    Ok((exporter, importer, year))
}

/// Reads `exporter,importer,year,flow` rows.
pub fn load_flows_csv(path: impl AsRef<Path>) -> Result<Vec<TradeFlowRecord>> {
    let path = path.as_ref();
    let mut reader = open(path)?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().ne(FLOW_HEADER.iter().copied()) {
        return Err(parse_err(
            path,
            1,
            format!("expected header '{}'", FLOW_HEADER.join(",")),
        ));
    }

    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let (exporter, importer, year) = parse_key(path, line, &rec)?;
        let flow = rec[3]
            .parse::<f64>()
            .map_err(|_| parse_err(path, line, format!("invalid flow '{}'", &rec[3])))?;
        if !flow.is_finite() {
            return Err(parse_err(path, line, "flow is not finite"));
        }
        if flow < 0.0 {
            return Err(parse_err(path, line, format!("negative flow {flow}")));
        }
        out.push(TradeFlowRecord {
            exporter,
            importer,
            year,
            flow,
        });
    }
    Ok(out)
}

/// Reads `exporter,importer,year,<id_1>,...,<id_d>` rows with 0/1 cells.
pub fn load_provisions_csv(path: impl AsRef<Path>) -> Result<ProvisionTable> {
    let path = path.as_ref();
    let mut reader = open(path)?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.len() < KEY_HEADER.len()
        || header.iter().take(3).ne(KEY_HEADER.iter().copied())
    {
        return Err(parse_err(
            path,
            1,
            format!("header must start with '{}'", KEY_HEADER.join(",")),
        ));
    }
    let ids: Vec<String> = header.iter().skip(3).map(str::to_string).collect();
    if ids.is_empty() {
        return Err(parse_err(path, 1, "no provision columns"));
    }
    let mut seen = HashSet::new();
    for id in &ids {
        if id.is_empty() {
            return Err(parse_err(path, 1, "empty provision identifier"));
        }
        if !seen.insert(id.as_str()) {
            return Err(parse_err(path, 1, format!("duplicate provision id '{id}'")));
        }
    }

    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let (exporter, importer, year) = parse_key(path, line, &rec)?;
        let provisions = rec
            .iter()
            .skip(3)
            .zip(&ids)
            .map(|(cell, id)| match cell {
                "0" => Ok(0u8),
                "1" => Ok(1u8),
                other => Err(parse_err(
                    path,
                    line,
                    format!("provision '{id}' has non-binary value '{other}'"),
                )),
            })
            .collect::<Result<Vec<_>>>()?;
        records.push(ProvisionRecord {
            exporter,
            importer,
            year,
            provisions,
        });
    }
    Ok(ProvisionTable { ids, records })
}

/// Reads `gdp_origin,gdp_destination,distance,flow` rows. Values are checked
/// for being numbers only; the estimator validates their sign.
pub fn load_gravity_csv(path: impl AsRef<Path>) -> Result<Vec<GravityObs>> {
    let path = path.as_ref();
    let mut reader = open(path)?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().ne(GRAVITY_HEADER.iter().copied()) {
        return Err(parse_err(
            path,
            1,
            format!("expected header '{}'", GRAVITY_HEADER.join(",")),
        ));
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let mut v = [0.0; 4];
        for (slot, (cell, name)) in v.iter_mut().zip(rec.iter().zip(GRAVITY_HEADER)) {
            *slot = cell
                .parse::<f64>()
                .map_err(|_| parse_err(path, line, format!("invalid {name} '{cell}'")))?;
        }
        out.push(GravityObs {
            gdp_origin: v[0],
            gdp_destination: v[1],
            distance: v[2],
            flow: v[3],
        });
    }
    Ok(out)
}
