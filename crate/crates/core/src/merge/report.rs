//! Per-run merge summaries as JSON documents and CSV rows.

use std::fs::OpenOptions;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::interp::AlphaStats;
use super::np::InvariantCounts;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeReport {
    pub method: String,
    /// Alignment applied before aggregation: `none`, `permute` or
    /// `weight_matching`.
    pub prior: String,
    pub seed: u64,
    /// `full` or `k` examples per class.
    pub opt_budget: String,
    /// Accuracy of each endpoint model on the evaluation data.
    pub pre_accuracy: Vec<f64>,
    pub accuracy: f64,
    pub loss: f64,
    pub loss_curve: Vec<f64>,
    pub alpha: Option<AlphaStats>,
    pub invariants: Option<InvariantCounts>,
    pub config_hash: String,
    /// Seconds; kept out of the serialised report so reruns are
    /// byte-identical.
    #[serde(skip)]
    pub wall_time: f64,
}

/// One row of the merge CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub prior: String,
    pub seed: u64,
    pub opt_budget: String,
    pub acc: f64,
    pub loss: f64,
    pub alpha_mean: Option<f64>,
    pub alpha_std: Option<f64>,
}

impl MergeReport {
    pub fn row(&self) -> ReportRow {
        ReportRow {
            method: self.method.clone(),
            prior: self.prior.clone(),
            seed: self.seed,
            opt_budget: self.opt_budget.clone(),
            acc: self.accuracy,
            loss: self.loss,
            alpha_mean: self.alpha.map(|a| a.mean),
            alpha_std: self.alpha.map(|a| a.std),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Writes `rows` as a complete CSV file with header.
pub fn write_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Appends one row, writing the header first when the file is new or empty.
pub fn append_csv(path: &Path, row: &ReportRow) -> Result<()> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    w.serialize(row)?;
    w.flush().map_err(|e| Error::io(path, e))
}
