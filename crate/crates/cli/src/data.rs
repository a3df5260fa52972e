//! `time,cause` CSV files.

use std::io::{Read, Write};
use std::path::Path;

use aabsp::datalab::{FailureRecord, Regime};
use aabsp::RawDataset;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Deserialize, Serialize)]
struct Row {
    time: f64,
    cause: usize,
}

pub fn read_records<R: Read>(source: R) -> Result<Vec<FailureRecord<f64>>, CliError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = reader.headers().map_err(|e| CliError::Data(e.to_string()))?.clone();
    for column in ["time", "cause"] {
        if !headers.iter().any(|h| h == column) {
            return Err(CliError::Data(format!("header lacks a `{column}` column")));
        }
    }
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        // Line 1 is the header.
        let line = i + 2;
        let row = row.map_err(|e| CliError::Data(format!("line {line}: {e}")))?;
        if row.cause == 0 {
            return Err(CliError::Data(format!("line {line}: causes are numbered from 1")));
        }
        out.push(FailureRecord {
            time: row.time,
            cause: row.cause,
        });
    }
    if out.is_empty() {
        return Err(CliError::Data("data file has no failure records".into()));
    }
    Ok(out)
}

pub fn load_records(path: &Path) -> Result<Vec<FailureRecord<f64>>, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    read_records(file).map_err(|e| match e {
        CliError::Data(msg) => CliError::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub struct DatasetMeta {
    pub n: u32,
    pub tau1: f64,
    pub r: Option<u32>,
    pub tau2: Option<f64>,
    pub causes: Option<usize>,
    pub stress_changed: Option<bool>,
}

pub fn build_dataset(records: Vec<FailureRecord<f64>>, meta: &DatasetMeta) -> Result<RawDataset, CliError> {
    let regime = match (meta.r, meta.tau2) {
        (Some(_), Some(_)) => return Err(CliError::Usage("give either --r or --tau2, not both".into())),
        (Some(r), None) => Regime::Type2 { r },
        (None, Some(tau2)) => Regime::Type1 { tau2 },
        (None, None) => Regime::Type2 { r: records.len() as u32 },
    };
    let causes = meta
        .causes
        .unwrap_or_else(|| records.iter().map(|r| r.cause).max().unwrap_or(1));
    let after = records.iter().any(|r| r.time > meta.tau1);
    let end_after = match regime {
        Regime::Type1 { tau2 } => tau2 > meta.tau1,
        Regime::Type2 { .. } => after,
    };
    let stress_changed = meta.stress_changed.unwrap_or(end_after);
    Ok(RawDataset::new(meta.n, meta.tau1, causes, regime, records, stress_changed)?)
}

pub fn write_records<W: Write>(sink: W, records: &[FailureRecord<f64>]) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_writer(sink);
    for rec in records {
        writer
            .serialize(Row {
                time: rec.time,
                cause: rec.cause,
            })
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    writer.flush().map_err(|e| CliError::Io(e.to_string()))
}
