use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Column holding the class label: a header name or a zero-based index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

impl FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => Self::Index(i),
            Err(_) => Self::Name(s.to_string()),
        })
    }
}

impl fmt::Display for LabelColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Index(i) => write!(f, "{i}"),
            Self::Name(n) => write!(f, "{n}"),
        }
    }
}

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), message: message.into() }
}

/// Reads a comma-separated file. Labels are remapped to `1..=c` in order of first
/// appearance; the original strings are kept as class names.
pub fn load_csv<T: Scalar>(path: impl AsRef<Path>, label_column: &LabelColumn, has_header: bool) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(has_header).trim(csv::Trim::All).from_reader(file);

    let header: Option<Vec<String>> = if has_header {
        let h = reader.headers().map_err(|e| parse_err(path, e.to_string()))?;
        Some(h.iter().map(str::to_string).collect())
    } else {
        None
    };

    let mut rows: Vec<csv::StringRecord> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(path, e.to_string()))?;
        if record.iter().all(|c| c.is_empty()) {
            continue;
        }
        rows.push(record);
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset(path.display().to_string()));
    }
    let width = rows[0].len();
    let label_idx = match label_column {
        LabelColumn::Index(i) => *i,
        LabelColumn::Name(name) => header
            .as_ref()
            .and_then(|h| h.iter().position(|c| c == name))
            .ok_or_else(|| parse_err(path, format!("label column '{name}' not found")))?,
    };
    if label_idx >= width {
        return Err(parse_err(path, format!("label column {label_idx} out of range for {width} columns")));
    }

    let d = width - 1;
    let mut values = Vec::with_capacity(rows.len() * d);
    let mut labels = Vec::with_capacity(rows.len());
    let mut class_names: Vec<String> = Vec::new();
    for (r, record) in rows.iter().enumerate() {
        let line = r + 1 + usize::from(has_header);
        if record.len() != width {
            return Err(parse_err(path, format!("line {line}: expected {width} fields, found {}", record.len())));
        }
        for (c, cell) in record.iter().enumerate() {
            if c == label_idx {
                let id = match class_names.iter().position(|n| n == cell) {
                    Some(k) => k + 1,
                    None => {
                        class_names.push(cell.to_string());
                        class_names.len()
                    }
                };
                labels.push(id);
            } else {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| parse_err(path, format!("line {line}, column {c}: '{cell}' is not numeric")))?;
                values.push(T::of(v));
            }
        }
    }
    let instances = DMatrix::from_row_slice(labels.len(), d, &values);
    let mut data = Dataset::new(instances, labels)?.with_class_names(class_names)?;
    if let Some(h) = header {
        let names = h.into_iter().enumerate().filter(|(c, _)| *c != label_idx).map(|(_, n)| n).collect();
        data = data.with_feature_names(names)?;
    }
    Ok(data)
}

/// Writes features followed by a `label` column (class names when known) with a header row.
pub fn write_csv<T: Scalar>(data: &Dataset<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |source: std::io::Error| Error::Io { path: path.display().to_string(), source };
    let mut out = std::io::BufWriter::new(File::create(path).map_err(io)?);
    let mut header: Vec<String> = match data.feature_names() {
        Some(n) => n.to_vec(),
        None => (0..data.dim()).map(|k| format!("x{k}")).collect(),
    };
    header.push("label".into());
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    for i in 0..data.len() {
        let mut cells: Vec<String> = data.instances().row(i).iter().map(|v| v.to_string()).collect();
        let y = data.label(i);
        cells.push(data.class_names().map(|n| n[y - 1].clone()).unwrap_or_else(|| y.to_string()));
        writeln!(out, "{}", cells.join(",")).map_err(io)?;
    }
    out.flush().map_err(io)
}
