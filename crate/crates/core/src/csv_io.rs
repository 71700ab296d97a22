//! CSV ingestion for trial data, target probabilities, and cluster maps.
//!
//! One dialect only: comma-separated, UTF-8, `.` decimal, header row
//! mandatory. Unit files carry `stratum`, `arm`, `y`, and contiguous
//! covariate columns `x1..xp`; unknown extra columns are ignored.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use crate::data::{Arm, Dataset, DatasetBuilder, DesignTargets, StratumLabel, ValueSummary};
use crate::error::{Error, Result};
use crate::sparse::{ClusterMap, ImputeWeightRule};

fn csv_err(context: &str, e: impl std::fmt::Display) -> Error {
    Error::Csv(format!("{context}: {e}"))
}

fn header_index(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim() == name)
}

fn require_column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    header_index(headers, name)
        .ok_or_else(|| Error::Csv(format!("missing required column `{name}`")))
}

/// Indices of the contiguous covariate columns `x1..xp`.
fn covariate_columns(headers: &csv::StringRecord) -> Result<Vec<usize>> {
    let mut numbered: Vec<(usize, usize)> = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        let h = h.trim();
        if let Some(num) = h.strip_prefix('x') {
            if let Ok(k) = num.parse::<usize>() {
                if k >= 1 {
                    numbered.push((k, i));
                }
            }
        }
    }
    numbered.sort_unstable();
    for (pos, (k, _)) in numbered.iter().enumerate() {
        if *k != pos + 1 {
            return Err(Error::Csv(format!(
                "covariate columns must be contiguous x1..xp, found x{k} out of order"
            )));
        }
    }
    Ok(numbered.into_iter().map(|(_, i)| i).collect())
}

fn parse_f64(field: &str, row: usize, col: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Csv(format!("row {row}: column `{col}` has non-numeric `{field}`")))
}

/// Read a unit file (`stratum`, `arm`, `y`, `x1..xp`).
pub fn read_units(reader: impl Read) -> Result<Dataset> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_err("header", e))?.clone();
    let stratum_col = require_column(&headers, "stratum")?;
    let arm_col = require_column(&headers, "arm")?;
    let y_col = require_column(&headers, "y")?;
    let x_cols = covariate_columns(&headers)?;

    let mut builder = DatasetBuilder::new();
    let mut x = vec![0.0; x_cols.len()];
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| csv_err(&format!("row {}", row + 1), e))?;
        let stratum = record.get(stratum_col).unwrap_or("").trim();
        if stratum.is_empty() {
            return Err(Error::Csv(format!("row {}: empty stratum", row + 1)));
        }
        let arm_raw = record.get(arm_col).unwrap_or("").trim();
        let arm = match arm_raw {
            "0" => Arm::Control,
            "1" => Arm::Treated,
            other => {
                return Err(Error::Csv(format!(
                    "row {}: arm must be 0 or 1, got `{other}`",
                    row + 1
                )))
            }
        };
        let y = parse_f64(record.get(y_col).unwrap_or(""), row + 1, "y")?;
        for (slot, &col) in x.iter_mut().zip(&x_cols) {
            *slot = parse_f64(
                record.get(col).unwrap_or(""),
                row + 1,
                headers.get(col).unwrap_or("x"),
            )?;
        }
        builder.push(stratum, arm, y, &x)?;
    }
    builder.finish()
}

pub fn read_units_path(path: &Path) -> Result<Dataset> {
    let f = std::fs::File::open(path)
        .map_err(|e| csv_err(&format!("open {}", path.display()), e))?;
    read_units(f)
}

/// Read per-stratum treated targets (`stratum`, `pi1`) and align them to an
/// interned dataset. Every observed stratum must be covered; unobserved
/// rows are ignored.
pub fn read_targets(reader: impl Read, data: &Dataset) -> Result<DesignTargets> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_err("header", e))?.clone();
    let stratum_col = require_column(&headers, "stratum")?;
    let pi_col = require_column(&headers, "pi1")?;
    let mut by_name: HashMap<String, f64> = HashMap::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| csv_err(&format!("row {}", row + 1), e))?;
        let name = record.get(stratum_col).unwrap_or("").trim().to_string();
        let pi = parse_f64(record.get(pi_col).unwrap_or(""), row + 1, "pi1")?;
        by_name.insert(name, pi);
    }
    let pi1 = data
        .stratum_names()
        .iter()
        .enumerate()
        .map(|(s, name)| {
            by_name
                .get(name.as_str())
                .copied()
                .ok_or(Error::MissingTarget { stratum: s })
        })
        .collect::<Result<Vec<f64>>>()?;
    DesignTargets::new(pi1)
}

pub fn read_targets_path(path: &Path, data: &Dataset) -> Result<DesignTargets> {
    let f = std::fs::File::open(path)
        .map_err(|e| csv_err(&format!("open {}", path.display()), e))?;
    read_targets(f, data)
}

/// Read a cluster file (`stratum`, `cluster`) and optional donor weights
/// (`stratum`, `w0`, `w1`), aligned to an interned dataset.
pub fn read_cluster_map(
    cluster_reader: impl Read,
    weights_reader: Option<impl Read>,
    data: &Dataset,
    values: &[ValueSummary],
    default_rule: ImputeWeightRule,
) -> Result<ClusterMap> {
    let mut rdr = csv::Reader::from_reader(cluster_reader);
    let headers = rdr.headers().map_err(|e| csv_err("header", e))?.clone();
    let stratum_col = require_column(&headers, "stratum")?;
    let cluster_col = require_column(&headers, "cluster")?;
    let mut by_name: HashMap<String, String> = HashMap::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| csv_err(&format!("row {}", row + 1), e))?;
        by_name.insert(
            record.get(stratum_col).unwrap_or("").trim().to_string(),
            record.get(cluster_col).unwrap_or("").trim().to_string(),
        );
    }
    let mut cluster_ids: Vec<String> = Vec::new();
    let cluster = data
        .stratum_names()
        .iter()
        .enumerate()
        .map(|(s, name)| {
            let cname = by_name
                .get(name.as_str())
                .ok_or(Error::MissingTarget { stratum: s })?;
            Ok(match cluster_ids.iter().position(|c| c == cname) {
                Some(i) => i as u32,
                None => {
                    cluster_ids.push(cname.clone());
                    (cluster_ids.len() - 1) as u32
                }
            })
        })
        .collect::<Result<Vec<u32>>>()?;

    match weights_reader {
        None => match default_rule {
            ImputeWeightRule::StratumShare => {
                ClusterMap::with_stratum_share_weights(cluster, values)
            }
            ImputeWeightRule::ArmShare => ClusterMap::with_arm_share_weights(cluster, values),
        },
        Some(reader) => {
            let mut rdr = csv::Reader::from_reader(reader);
            let headers = rdr.headers().map_err(|e| csv_err("header", e))?.clone();
            let stratum_col = require_column(&headers, "stratum")?;
            let w0_col = require_column(&headers, "w0")?;
            let w1_col = require_column(&headers, "w1")?;
            let mut by_name: HashMap<String, (f64, f64)> = HashMap::new();
            for (row, record) in rdr.records().enumerate() {
                let record = record.map_err(|e| csv_err(&format!("row {}", row + 1), e))?;
                let w0 = parse_f64(record.get(w0_col).unwrap_or(""), row + 1, "w0")?;
                let w1 = parse_f64(record.get(w1_col).unwrap_or(""), row + 1, "w1")?;
                by_name.insert(
                    record.get(stratum_col).unwrap_or("").trim().to_string(),
                    (w0, w1),
                );
            }
            let mut w = [vec![0.0; cluster.len()], vec![0.0; cluster.len()]];
            for (s, name) in data.stratum_names().iter().enumerate() {
                let (w0, w1) = by_name
                    .get(name.as_str())
                    .copied()
                    .ok_or(Error::MissingTarget { stratum: s })?;
                w[0][s] = w0;
                w[1][s] = w1;
            }
            ClusterMap::new(cluster, w)
        }
    }
}

/// Render a label for error messages that carry a stratum index.
pub fn describe_stratum(data: &Dataset, index: usize) -> String {
    if index < data.n_strata() {
        format!("{index} (label `{}`)", data.stratum_name(StratumLabel(index as u32)))
    } else {
        index.to_string()
    }
}
