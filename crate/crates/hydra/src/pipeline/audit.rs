//! Audit artifacts.
//!
//! Every data handoff in the pipeline is persisted as JSONL so drift
//! between phases can be inspected after the fact. Writers are
//! deterministic: same inputs, byte-identical files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{HydraError, Result};

/// One line per item.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item)
            .map_err(|e| HydraError::Data(format!("failed to serialize audit row: {e}")))?;
        w.write_all(line.as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item: T = serde_json::from_str(&line).map_err(|e| HydraError::Parse {
            line: idx + 1,
            msg: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

/// Reranked context for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankRow {
    pub user_id: String,
    pub query: String,
    pub item_ids: Vec<String>,
    pub scores: Vec<f64>,
}

/// Sampled candidates and the adapter's choice for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRow {
    pub user_id: String,
    pub query: String,
    pub gold: String,
    pub generations: Vec<String>,
    pub scores: Vec<f64>,
    pub chosen: usize,
}

/// Final answer for one test query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub user_id: String,
    pub query: String,
    pub prediction: String,
    pub gold: String,
}
