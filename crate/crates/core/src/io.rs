//! Session and feature file formats.
//!
//! `sessions.jsonl` holds one JSON object per line with fields `session_id`,
//! `clicked_images`, `intuition`, `true_label`. `features.csv` has the header
//! `image_id,f0,...,f{D-1}` and one row per image; floats are written with
//! full round-trip precision, so write-then-read reproduces the in-memory
//! values exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::contexts::{ImageFeatureTable, SessionRecord};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("{path}:{line}: invalid session record: {source}")]
    BadSessionLine {
        path: String,
        line: usize,
        source: serde_json::Error,
    },

    #[error("{path}:{line}: {detail}")]
    BadRow {
        path: String,
        line: usize,
        detail: String,
    },

    #[error("{path}: expected header image_id,f0,...,f{{D-1}}, got {got:?}")]
    BadHeader { path: String, got: String },

    #[error("{path}: file holds no data rows")]
    EmptyFile { path: String },

    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
}

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_sessions_jsonl(path: &Path, sessions: &[SessionRecord]) -> Result<(), DataError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    for session in sessions {
        let line = serde_json::to_string(session).expect("session records always serialize");
        writeln!(out, "{line}").map_err(|e| io_err(path, e))?;
    }
    out.flush().map_err(|e| io_err(path, e))
}

pub fn read_sessions_jsonl(path: &Path) -> Result<Vec<SessionRecord>, DataError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut sessions = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SessionRecord =
            serde_json::from_str(&line).map_err(|source| DataError::BadSessionLine {
                path: path.display().to_string(),
                line: idx + 1,
                source,
            })?;
        sessions.push(record);
    }
    if sessions.is_empty() {
        return Err(DataError::EmptyFile {
            path: path.display().to_string(),
        });
    }
    Ok(sessions)
}

pub fn write_features_csv(path: &Path, table: &ImageFeatureTable) -> Result<(), DataError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(file));
    let mut header = Vec::with_capacity(table.feature_dim() + 1);
    header.push("image_id".to_string());
    for i in 0..table.feature_dim() {
        header.push(format!("f{i}"));
    }
    writer.write_record(&header).map_err(|source| DataError::Csv {
        path: path.display().to_string(),
        source,
    })?;
    for (id, row) in table.iter() {
        let mut record = Vec::with_capacity(row.len() + 1);
        record.push(id.to_string());
        // `{}` formats the shortest representation that round-trips.
        record.extend(row.iter().map(|v| format!("{v}")));
        writer.write_record(&record).map_err(|source| DataError::Csv {
            path: path.display().to_string(),
            source,
        })?;
    }
    writer.flush().map_err(|e| io_err(path, e))
}

pub fn read_features_csv(path: &Path) -> Result<ImageFeatureTable, DataError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(file));
    let headers = reader
        .headers()
        .map_err(|source| DataError::Csv {
            path: path.display().to_string(),
            source,
        })?
        .clone();
    let dim = headers.len().saturating_sub(1);
    let header_ok = dim >= 1
        && headers.get(0) == Some("image_id")
        && headers
            .iter()
            .skip(1)
            .enumerate()
            .all(|(i, name)| name == format!("f{i}"));
    if !header_ok {
        return Err(DataError::BadHeader {
            path: path.display().to_string(),
            got: headers.iter().collect::<Vec<_>>().join(","),
        });
    }

    let mut table = ImageFeatureTable::new(dim);
    for result in reader.records() {
        let record = result.map_err(|source| DataError::Csv {
            path: path.display().to_string(),
            source,
        })?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or_default();
        if record.len() != dim + 1 {
            return Err(DataError::BadRow {
                path: path.display().to_string(),
                line,
                detail: format!("expected {} fields, got {}", dim + 1, record.len()),
            });
        }
        let id = record.get(0).unwrap_or_default().to_string();
        let mut row = Vec::with_capacity(dim);
        for (i, field) in record.iter().skip(1).enumerate() {
            let value: f64 = field.parse().map_err(|_| DataError::BadRow {
                path: path.display().to_string(),
                line,
                detail: format!("column f{i}: not a number: {field:?}"),
            })?;
            row.push(value);
        }
        table.insert(id.clone(), row).map_err(|e| DataError::BadRow {
            path: path.display().to_string(),
            line,
            detail: e.to_string(),
        })?;
    }
    if table.is_empty() {
        return Err(DataError::EmptyFile {
            path: path.display().to_string(),
        });
    }
    Ok(table)
}
