//! CSV ingestion and emission. Comma-separated, header row required, '.'
//! decimal separator, UTF-8. Parse failures report the offending line.

use std::path::Path;

use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;

use eknockoff::data::{DataMatrix, ResponseVector};

/// A parsed dataset: feature columns plus an optional response column.
pub struct Dataset {
    pub labels: Vec<String>,
    pub x: DataMatrix,
    pub y: Option<ResponseVector>,
}

/// Reads a CSV with a header row. When `response` is given, that column
/// becomes `y` and the rest are features; otherwise every column is a
/// feature.
pub fn read_dataset(path: &Path, response: Option<&str>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .with_context(|| format!("cannot open dataset {}", path.display()))?;
    let headers: Vec<String> = reader
        .headers()
        .with_context(|| format!("cannot read the header row of {}", path.display()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let response_idx = match response {
        Some(name) => {
            let idx = headers.iter().position(|h| h == name);
            match idx {
                Some(i) => Some(i),
                None => bail!(
                    "response column '{name}' not found in {} (columns: {})",
                    path.display(),
                    headers.join(", ")
                ),
            }
        }
        None => None,
    };
    let labels: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != response_idx)
        .map(|(_, h)| h.clone())
        .collect();
    if labels.is_empty() {
        bail!("dataset {} has no feature columns", path.display());
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut y_values: Vec<f64> = Vec::new();
    for record in reader.records() {
        let record = record.with_context(|| format!("malformed CSV in {}", path.display()))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != headers.len() {
            bail!(
                "line {line} of {} has {} fields, expected {}",
                path.display(),
                record.len(),
                headers.len()
            );
        }
        let mut row = Vec::with_capacity(labels.len());
        for (i, field) in record.iter().enumerate() {
            let value: f64 = field.trim().parse().with_context(|| {
                format!(
                    "line {line} of {}: cannot parse '{}' in column '{}' as a number",
                    path.display(),
                    field,
                    headers[i]
                )
            })?;
            if Some(i) == response_idx {
                y_values.push(value);
            } else {
                row.push(value);
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("dataset {} has no data rows", path.display());
    }
    let x = DataMatrix::from_rows(&rows)?;
    let y = match response_idx {
        Some(_) => Some(ResponseVector::from_slice(&y_values)?),
        None => None,
    };
    Ok(Dataset { labels, x, y })
}

/// Reads a p x p covariance CSV (header row expected).
pub fn read_covariance(path: &Path, p: usize) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .with_context(|| format!("cannot open covariance file {}", path.display()))?;
    let width = reader
        .headers()
        .with_context(|| "cannot read the covariance header row")?
        .len();
    if width != p {
        bail!(
            "covariance file {} has {width} columns but the dataset has {p} features",
            path.display()
        );
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row: Vec<f64> = record
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("line {line} of {}: non-numeric entry", path.display()))?;
        rows.push(row);
    }
    if rows.len() != p {
        bail!(
            "covariance file {} has {} rows but the dataset has {p} features",
            path.display(),
            rows.len()
        );
    }
    Ok(DMatrix::from_row_iterator(
        p,
        p,
        rows.iter().flat_map(|r| r.iter().copied()),
    ))
}

/// Writes a matrix as CSV with the given header labels. Floats use the
/// shortest representation that round-trips exactly.
pub fn write_matrix_csv(path: &Path, headers: &[String], m: &DMatrix<f64>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    writer.write_record(headers)?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}
