//! Continuous tabular datasets: loading, column statistics and partitioning.

mod partition;
mod stats;

use std::collections::BTreeSet;
use std::fs::File;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub use partition::{partition, Partition, PartitionManifest, PartitionSizes};
pub use stats::ColumnStats;

/// Dense row-major-by-convention matrix: rows are instances, columns features.
pub type Matrix = DMatrix<f64>;

/// A matrix of continuous features with optional integer class labels.
///
/// `row_ids` carries each row's index in the source file, so partitions and
/// explanations can refer back to the original record.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<String>,
    values: Matrix,
    labels: Option<Vec<usize>>,
    class_names: Vec<String>,
    row_ids: Vec<usize>,
}

impl Dataset {
    pub fn new(
        columns: Vec<String>,
        values: Matrix,
        labels: Option<Vec<usize>>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let row_ids = (0..values.nrows()).collect();
        Self::with_row_ids(columns, values, labels, class_names, row_ids)
    }

    /// Unlabelled dataset with generated column names `x0, x1, ...`.
    pub fn from_matrix(values: Matrix) -> Result<Self> {
        let columns = (0..values.ncols()).map(|j| format!("x{j}")).collect();
        Self::new(columns, values, None, Vec::new())
    }

    pub fn with_row_ids(
        columns: Vec<String>,
        values: Matrix,
        labels: Option<Vec<usize>>,
        class_names: Vec<String>,
        row_ids: Vec<usize>,
    ) -> Result<Self> {
        if columns.len() != values.ncols() {
            return Err(Error::DimensionMismatch {
                expected: columns.len(),
                found: values.ncols(),
            });
        }
        if row_ids.len() != values.nrows() {
            return Err(Error::DimensionMismatch {
                expected: values.nrows(),
                found: row_ids.len(),
            });
        }
        if let Some((idx, _)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let row = idx % values.nrows().max(1);
            let col = idx / values.nrows().max(1);
            return Err(Error::InvalidInput(format!(
                "non-finite value at row {row}, column {col}"
            )));
        }
        if let Some(labels) = &labels {
            if labels.len() != values.nrows() {
                return Err(Error::DimensionMismatch {
                    expected: values.nrows(),
                    found: labels.len(),
                });
            }
            if let Some(bad) = labels.iter().find(|&&l| l >= class_names.len()) {
                return Err(Error::InvalidInput(format!(
                    "label {bad} outside [0, {})",
                    class_names.len()
                )));
            }
        }
        Ok(Self {
            columns,
            values,
            labels,
            class_names,
            row_ids,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Number of classes `l` (0 for unlabelled data).
    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.values.row(i).transpose()
    }

    pub fn column(&self, j: usize) -> DVector<f64> {
        self.values.column(j).into_owned()
    }

    /// New dataset holding the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let values = self.values.select_rows(rows);
        let labels = self
            .labels
            .as_ref()
            .map(|l| rows.iter().map(|&r| l[r]).collect());
        Dataset {
            columns: self.columns.clone(),
            values,
            labels,
            class_names: self.class_names.clone(),
            row_ids: rows.iter().map(|&r| self.row_ids[r]).collect(),
        }
    }

    pub fn column_stats(&self) -> Result<ColumnStats> {
        ColumnStats::from_matrix(&self.values)
    }
}

/// Load a comma-separated file with a header row.
///
/// Every non-label cell must parse as a finite `f64`. When `label_column` is
/// given, its distinct values become classes `0..l`, ordered numerically if
/// all values are numbers and lexicographically otherwise.
pub fn load_csv(path: impl AsRef<Path>, label_column: Option<&str>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::EmptyFile { path: path.into() });
    }
    let label_idx =
        match label_column {
            Some(name) => Some(header.iter().position(|h| h == name).ok_or_else(|| {
                Error::InvalidInput(format!("label column '{name}' not in header"))
            })?),
            None => None,
        };

    let mut flat = Vec::new();
    let mut raw_labels = Vec::new();
    let mut n = 0usize;
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(Error::InvalidInput(format!(
                "row {} has {} fields, header has {}",
                r + 1,
                record.len(),
                header.len()
            )));
        }
        for (c, cell) in record.iter().enumerate() {
            if Some(c) == label_idx {
                raw_labels.push(cell.to_owned());
                continue;
            }
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    row: r + 1,
                    column: header[c].clone(),
                    value: cell.to_owned(),
                })?;
            flat.push(v);
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyFile { path: path.into() });
    }

    let columns: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(c, _)| Some(*c) != label_idx)
        .map(|(_, h)| h.clone())
        .collect();
    let values = Matrix::from_row_slice(n, columns.len(), &flat);

    let (labels, class_names) = if label_idx.is_some() {
        let (labels, names) = encode_labels(&raw_labels);
        (Some(labels), names)
    } else {
        (None, Vec::new())
    };
    Dataset::new(columns, values, labels, class_names)
}

fn encode_labels(raw: &[String]) -> (Vec<usize>, Vec<String>) {
    let distinct: BTreeSet<&str> = raw.iter().map(String::as_str).collect();
    let mut names: Vec<String> = distinct.into_iter().map(str::to_owned).collect();
    if names.iter().all(|s| s.parse::<f64>().is_ok()) {
        names.sort_by(|a, b| {
            a.parse::<f64>()
                .unwrap()
                .total_cmp(&b.parse::<f64>().unwrap())
        });
    }
    let labels = raw
        .iter()
        .map(|s| {
            names
                .iter()
                .position(|n| n == s)
                .expect("label collected above")
        })
        .collect();
    (labels, names)
}

/// Write a dataset as CSV. Floats use the shortest representation that
/// round-trips exactly; labels are written back as their class names in a
/// trailing column named `label_column`.
pub fn save_csv(d: &Dataset, path: impl AsRef<Path>, label_column: &str) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let mut header: Vec<&str> = d.columns.iter().map(String::as_str).collect();
    if d.labels.is_some() {
        header.push(label_column);
    }
    w.write_record(&header)?;
    for i in 0..d.n_rows() {
        let mut rec: Vec<String> = d.values.row(i).iter().map(|v| v.to_string()).collect();
        if let Some(labels) = &d.labels {
            rec.push(d.class_names[labels[i]].clone());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Write a bare matrix under the given header (used to export neighborhoods).
pub fn save_matrix_csv(columns: &[String], z: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    let d = Dataset::new(columns.to_vec(), z.clone(), None, Vec::new())?;
    save_csv(&d, path, "")
}
