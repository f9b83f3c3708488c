use std::collections::HashSet;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::dataset::{CreditDataset, Label};
use crate::error::{Error, Result};

/// Column roles and label encoding for CSV ingest/export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvOptions {
    /// Label column; `None` loads an unlabeled dataset.
    pub label_column: Option<String>,
    /// Id column; `None` numbers rows from 0.
    pub id_column: Option<String>,
    pub bad_value: String,
    pub good_value: String,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            label_column: None,
            id_column: None,
            bad_value: "1".into(),
            good_value: "0".into(),
        }
    }
}

impl CsvOptions {
    pub fn labeled(label_column: &str) -> Self {
        Self {
            label_column: Some(label_column.into()),
            ..Self::default()
        }
    }

    pub fn with_id_column(mut self, id_column: &str) -> Self {
        self.id_column = Some(id_column.into());
        self
    }

    fn parse_label(&self, raw: &str) -> Option<Label> {
        let raw = raw.trim();
        if raw == self.bad_value {
            return Some(Label::Bad);
        }
        if raw == self.good_value {
            return Some(Label::Good);
        }
        // "1.0" still matches an encoding of "1"
        let v: f64 = raw.parse().ok()?;
        if self.bad_value.parse::<f64>().ok() == Some(v) {
            Some(Label::Bad)
        } else if self.good_value.parse::<f64>().ok() == Some(v) {
            Some(Label::Good)
        } else {
            None
        }
    }
}

/// Reads a headed CSV file. Row order is preserved; every column that is not
/// the id or label column must be numeric.
pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<CreditDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(file);
    let headers = match reader.headers() {
        Ok(h) => h.clone(),
        Err(e) if is_empty_input(&e) => return Err(Error::NoDataRows),
        Err(e) => return Err(e.into()),
    };
    if headers.is_empty() {
        return Err(Error::NoDataRows);
    }
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let label_idx = opts.label_column.as_deref().map(find).transpose()?;
    let id_idx = opts.id_column.as_deref().map(find).transpose()?;
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| Some(c) != label_idx && Some(c) != id_idx)
        .collect();
    let feature_names: Vec<String> = feature_cols
        .iter()
        .map(|&c| headers[c].trim().to_string())
        .collect();

    let d = feature_cols.len();
    let mut values = Vec::new();
    let mut ids = Vec::new();
    let mut labels = label_idx.map(|_| Vec::new());
    let mut seen = HashSet::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        // 1-based data row numbers, header excluded
        let row_no = row + 1;
        for &c in &feature_cols {
            let raw = record[c].trim();
            let v: f64 = raw.parse().map_err(|_| Error::NonNumericCell {
                row: row_no,
                column: headers[c].to_string(),
                value: raw.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonNumericCell {
                    row: row_no,
                    column: headers[c].to_string(),
                    value: raw.to_string(),
                });
            }
            values.push(v);
        }
        let id = match id_idx {
            Some(c) => record[c].trim().to_string(),
            None => row.to_string(),
        };
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        ids.push(id);
        if let (Some(c), Some(labels)) = (label_idx, labels.as_mut()) {
            let raw = &record[c];
            let label = opts.parse_label(raw).ok_or_else(|| Error::BadLabel {
                row: row_no,
                column: headers[c].to_string(),
                value: raw.to_string(),
            })?;
            labels.push(label);
        }
    }
    if ids.is_empty() {
        return Err(Error::NoDataRows);
    }
    let features = Array2::from_shape_vec((ids.len(), d), values)
        .expect("row width enforced by csv reader");
    CreditDataset::new(ids, feature_names, features, labels)
}

fn is_empty_input(e: &csv::Error) -> bool {
    matches!(e.kind(), csv::ErrorKind::Io(_)) || e.position().is_none_or(|p| p.byte() == 0)
}

/// Writes `ds` in the format [`load_csv`] reads: id column first, then the
/// features, then the label column when the dataset is labeled.
pub fn write_csv(ds: &CreditDataset, path: impl AsRef<Path>, opts: &CsvOptions) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let id_col = opts.id_column.as_deref().unwrap_or("id");
    let label_col = opts.label_column.as_deref().unwrap_or("label");
    let mut header = vec![id_col.to_string()];
    header.extend(ds.feature_names().iter().cloned());
    if ds.is_labeled() {
        header.push(label_col.to_string());
    }
    w.write_record(&header)?;
    let labels = ds.labels();
    let mut rec = Vec::with_capacity(header.len());
    for (i, row) in ds.features().rows().into_iter().enumerate() {
        rec.clear();
        rec.push(ds.ids()[i].clone());
        rec.extend(row.iter().map(|v| format_f64(*v)));
        if let Some(l) = labels {
            rec.push(if l[i].is_bad() {
                opts.bad_value.clone()
            } else {
                opts.good_value.clone()
            });
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn format_f64(v: f64) -> String {
    let mut s = format!("{v}");
    if s == "-0" {
        s = "0".into();
    }
    s
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
