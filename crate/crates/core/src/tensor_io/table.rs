use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TableError {
    #[error("i/o error: {0}")]
    Io(String),
    #[error("malformed CSV at line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("duplicate candidate id {0:?}")]
    DuplicateId(String),
    #[error("candidate {id:?}: label {label:?} is not 0 or 1")]
    BadLabel { id: String, label: String },
    #[error("candidate {0:?} has neither logits_path nor score")]
    MissingSource(String),
    #[error("candidate {id:?}: score {value:?} is not a finite number")]
    BadScore { id: String, value: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScreeningRow {
    pub candidate_id: String,
    pub label: u8,
    /// Resolved against the table's directory when relative.
    pub logits_path: Option<PathBuf>,
    pub precomputed_score: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ScreeningTable {
    pub rows: Vec<ScreeningRow>,
}

impl ScreeningTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.rows.iter().filter(|r| r.label == 1).count()
    }
}

#[derive(Deserialize)]
struct RawRow {
    candidate_id: String,
    label: String,
    logits_path: String,
    score: String,
}

/// Parse CSV text with header `candidate_id,label,logits_path,score`.
/// Relative `logits_path` entries are joined onto `base_dir`.
pub fn parse_screening_csv(text: &str, base_dir: &Path) -> Result<ScreeningTable, TableError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut seen = HashSet::new();
    let mut rows = Vec::new();
    for record in reader.deserialize::<RawRow>() {
        let raw = record.map_err(|e| TableError::Malformed {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let id = raw.candidate_id;
        if !seen.insert(id.clone()) {
            return Err(TableError::DuplicateId(id));
        }
        let label = match raw.label.as_str() {
            "0" => 0,
            "1" => 1,
            _ => return Err(TableError::BadLabel { id, label: raw.label }),
        };
        let precomputed_score = if raw.score.is_empty() {
            None
        } else {
            match raw.score.parse::<f64>() {
                Ok(v) if v.is_finite() => Some(v),
                _ => return Err(TableError::BadScore { id, value: raw.score }),
            }
        };
        let logits_path = (!raw.logits_path.is_empty()).then(|| base_dir.join(&raw.logits_path));
        if logits_path.is_none() && precomputed_score.is_none() {
            return Err(TableError::MissingSource(id));
        }
        rows.push(ScreeningRow {
            candidate_id: id,
            label,
            logits_path,
            precomputed_score,
        });
    }
    Ok(ScreeningTable { rows })
}

pub fn read_screening_csv(path: impl AsRef<Path>) -> Result<ScreeningTable, TableError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| TableError::Io(e.to_string()))?;
    parse_screening_csv(&text, path.parent().unwrap_or_else(|| Path::new(".")))
}
