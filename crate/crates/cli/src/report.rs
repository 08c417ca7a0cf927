use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

use lnml_core::eval::ComparisonMatrix;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub name: String,
    pub instances: usize,
    pub features: usize,
    pub class_sizes: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub name: String,
    pub kind: String,
    pub status: MethodStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub accuracy: Option<f64>,
    pub score: Option<f64>,
    /// Out-of-fold predicted labels (internal class ids, `1..=c`).
    pub predictions: Vec<usize>,
    pub fold_notes: Vec<Option<String>>,
    /// Objective trace of each fold's fit.
    pub traces: Vec<Vec<f64>>,
}

/// Outcome of a benchmark run. Everything except `timings` is a deterministic function
/// of the resolved config and the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub report_version: u32,
    pub toolkit_version: String,
    pub config: ExperimentConfig,
    pub dataset: DatasetInfo,
    pub methods: Vec<MethodResult>,
    /// Comparison among the methods that completed, in config order.
    pub comparison: Option<ComparisonMatrix>,
    pub notes: Vec<String>,
    /// Wall-clock seconds per method.
    pub timings: BTreeMap<String, f64>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// The JSON without the `timings` key; identical across reruns of the same config.
    pub fn deterministic_json(&self) -> String {
        let mut value = serde_json::to_value(self).expect("report serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("timings");
        }
        serde_json::to_string_pretty(&value).expect("report serializes")
    }

    pub fn to_text_table(&self) -> String {
        let mut out = match &self.comparison {
            Some(c) => c.to_text_table(&self.dataset.name),
            None => "no method completed\n".to_string(),
        };
        for m in self.methods.iter().filter(|m| m.status == MethodStatus::Failed) {
            let _ = writeln!(out, "FAILED {}: {}", m.name, m.error.as_deref().unwrap_or("unknown error"));
        }
        for note in &self.notes {
            let _ = writeln!(out, "note: {note}");
        }
        out
    }

    pub fn save(&self, report: Option<&Path>, table: Option<&Path>) -> CliResult<()> {
        if let Some(path) = report {
            std::fs::write(path, self.to_json() + "\n").map_err(|e| CliError::io(path, e))?;
        }
        if let Some(path) = table {
            std::fs::write(path, self.to_text_table()).map_err(|e| CliError::io(path, e))?;
        }
        Ok(())
    }
}
