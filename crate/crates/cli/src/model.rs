//! Versioned JSON model files. Matrices are stored as base64 of their row-major
//! little-endian `f64` entries.

use std::collections::BTreeMap;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use lnml_core::data::{PcaModel, Standardizer};
use lnml_core::driver::OuterStop;
use lnml_core::pipeline::FittedPipeline;
use lnml_core::MetricMatrix;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::config::MethodSpec;
use crate::error::{CliError, CliResult};

pub const MODEL_FORMAT: &str = "lnml-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: String,
}

impl EncodedMatrix {
    pub fn encode(m: &DMatrix<f64>) -> Self {
        let mut bytes = Vec::with_capacity(m.len() * 8);
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                bytes.extend_from_slice(&m[(i, j)].to_le_bytes());
            }
        }
        Self { rows: m.nrows(), cols: m.ncols(), data: STANDARD.encode(bytes) }
    }

    pub fn encode_vec(v: &[f64]) -> Self {
        Self::encode(&DMatrix::from_row_slice(1, v.len(), v))
    }

    pub fn decode(&self) -> Result<DMatrix<f64>, String> {
        let bytes = STANDARD.decode(&self.data).map_err(|e| format!("bad base64 payload: {e}"))?;
        if bytes.len() != self.rows * self.cols * 8 {
            return Err(format!("payload holds {} bytes, expected {} for {}x{}", bytes.len(), self.rows * self.cols * 8, self.rows, self.cols));
        }
        let values: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &values))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizerRecord {
    pub means: EncodedMatrix,
    pub deviations: EncodedMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaRecord {
    pub mean: EncodedMatrix,
    pub components: EncodedMatrix,
    pub explained_variance_ratio: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub schema_version: u32,
    pub toolkit_version: String,
    pub method: MethodSpec,
    /// Grid point picked by inner cross-validation, if the method had a grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected: Option<String>,
    pub dataset: String,
    pub n_instances: usize,
    pub input_dim: usize,
    pub class_names: Option<Vec<String>>,
    pub standardizer: Option<StandardizerRecord>,
    pub pca: Option<PcaRecord>,
    /// Learned metric, in the space after standardization and PCA.
    pub metric: EncodedMatrix,
    /// Target neighbors per training instance (zero-based indices).
    pub assignment: Option<Vec<Vec<usize>>>,
    pub trace: Vec<f64>,
    pub assignment_changes: Vec<usize>,
    pub outer_stop: Option<OuterStop>,
}

impl ModelFile {
    pub fn from_fit(
        fit: &FittedPipeline<f64>,
        method: MethodSpec,
        selected: Option<String>,
        dataset: String,
        input_dim: usize,
        class_names: Option<Vec<String>>,
    ) -> Self {
        let standardizer = fit.standardizer.as_ref().map(|s: &Standardizer<f64>| StandardizerRecord {
            means: EncodedMatrix::encode_vec(&s.means),
            deviations: EncodedMatrix::encode_vec(&s.deviations),
        });
        let pca = fit.pca.as_ref().map(|p: &PcaModel<f64>| PcaRecord {
            mean: EncodedMatrix::encode_vec(p.mean.as_slice()),
            components: EncodedMatrix::encode(&p.components),
            explained_variance_ratio: p.explained_variance_ratio.clone(),
        });
        Self {
            format: MODEL_FORMAT.into(),
            schema_version: MODEL_VERSION,
            toolkit_version: env!("CARGO_PKG_VERSION").into(),
            method,
            selected,
            dataset,
            n_instances: fit.train.len(),
            input_dim,
            class_names,
            standardizer,
            pca,
            metric: EncodedMatrix::encode(fit.metric.entries()),
            assignment: fit.summary.assignment.as_ref().map(|a| a.rows().to_vec()),
            trace: fit.summary.objective_trace.clone(),
            assignment_changes: fit.summary.assignment_changes.clone(),
            outer_stop: fit.summary.outer_stop,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| CliError::io(path, e))
    }

    /// Reads and checks a model file: format tag, schema version and payload shapes.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let schema = |message: String| CliError::Schema { path: path.display().to_string(), message };
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| schema(format!("not JSON: {e}")))?;
        let format = value.get("format").and_then(|v| v.as_str());
        if format != Some(MODEL_FORMAT) {
            return Err(schema(format!("format tag is {format:?}, expected \"{MODEL_FORMAT}\"")));
        }
        let version = value.get("schema_version").and_then(|v| v.as_u64());
        if version != Some(u64::from(MODEL_VERSION)) {
            return Err(schema(format!("schema version {version:?}, this build reads version {MODEL_VERSION}")));
        }
        let model: Self = serde_json::from_value(value).map_err(|e| schema(e.to_string()))?;
        let metric = model.metric.decode().map_err(&schema)?;
        if metric.nrows() != metric.ncols() {
            return Err(schema(format!("metric is {}x{}", metric.nrows(), metric.ncols())));
        }
        if let Some(rows) = &model.assignment {
            if rows.len() != model.n_instances || rows.iter().flatten().any(|&j| j >= model.n_instances) {
                return Err(schema("assignment does not match the instance count".into()));
            }
        }
        Ok(model)
    }

    pub fn metric(&self) -> CliResult<MetricMatrix<f64>> {
        let m = self.metric.decode().map_err(|message| CliError::Schema { path: "<model>".into(), message })?;
        Ok(MetricMatrix::new(m)?)
    }

    pub fn summary(&self) -> CliResult<ModelSummary> {
        let m = self.metric()?;
        let mut eigenvalues: Vec<f64> = SymmetricEigen::new(m.entries().clone()).eigenvalues.iter().copied().collect();
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        let histogram = self.assignment.as_ref().map(|rows| {
            let mut h = BTreeMap::new();
            for r in rows {
                *h.entry(r.len()).or_insert(0usize) += 1;
            }
            h
        });
        Ok(ModelSummary {
            method: self.method.display_name(),
            selected: self.selected.clone(),
            dim: m.dim(),
            eigenvalues,
            neighbor_count_histogram: histogram,
            trace: self.trace.clone(),
            outer_stop: self.outer_stop,
        })
    }
}

/// What `inspect` prints.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub method: String,
    pub selected: Option<String>,
    pub dim: usize,
    /// Metric eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Number of instances having each target-neighbor count.
    pub neighbor_count_histogram: Option<BTreeMap<usize, usize>>,
    pub trace: Vec<f64>,
    pub outer_stop: Option<OuterStop>,
}

impl ModelSummary {
    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "method: {}", self.method);
        if let Some(s) = &self.selected {
            let _ = writeln!(out, "selected: {s}");
        }
        let _ = writeln!(out, "metric: {0}x{0}", self.dim);
        let eig: Vec<String> = self.eigenvalues.iter().map(|e| format!("{e:.6}")).collect();
        let _ = writeln!(out, "eigenvalues: {}", eig.join(" "));
        match &self.neighbor_count_histogram {
            Some(h) => {
                let _ = writeln!(out, "target neighbors per instance:");
                for (k, count) in h {
                    let _ = writeln!(out, "  {k:>3}: {count}");
                }
            }
            None => {
                let _ = writeln!(out, "target neighbors: none stored");
            }
        }
        if self.trace.is_empty() {
            let _ = writeln!(out, "trace: empty");
        } else {
            let _ = writeln!(out, "trace ({} entries):", self.trace.len());
            for (i, v) in self.trace.iter().enumerate() {
                let _ = writeln!(out, "  {:>4}  {v:.6e}", i + 1);
            }
        }
        if let Some(stop) = self.outer_stop {
            let _ = writeln!(out, "outer stop: {stop:?}");
        }
        out
    }
}
