//! Validated sample containers: design matrix and response vector.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// An `n x p` design matrix. Rows are observations, columns are features.
/// Construction rejects empty shapes and non-finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidInput(
                "data matrix must have at least one row and one column".into(),
            ));
        }
        if let Some((i, j)) = first_non_finite(&values) {
            return Err(Error::InvalidInput(format!(
                "data matrix entry ({i}, {j}) is not finite"
            )));
        }
        Ok(Self { values })
    }

    /// Builds a matrix from row slices. All rows must share one length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidInput("no rows given".into()));
        }
        let p = rows[0].len();
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidInput("rows have inconsistent lengths".into()));
        }
        Self::new(DMatrix::from_row_iterator(
            rows.len(),
            p,
            rows.iter().flat_map(|r| r.iter().copied()),
        ))
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }

    /// Returns the subset of rows given by `idx`, in order.
    /// Panics if an index is out of range.
    pub fn select_rows(&self, idx: &[usize]) -> DataMatrix {
        DataMatrix {
            values: self.values.select_rows(idx.iter()),
        }
    }

    /// Per-column means, length `p`.
    pub fn column_means(&self) -> DVector<f64> {
        self.values.row_mean().transpose()
    }
}

/// A length-`n` response vector with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseVector {
    values: DVector<f64>,
}

impl ResponseVector {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("response vector is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "response vector contains non-finite entries".into(),
            ));
        }
        Ok(Self { values })
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(values))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.values
    }

    /// Returns the subset of entries given by `idx`, in order.
    /// Panics if an index is out of range.
    pub fn select(&self, idx: &[usize]) -> ResponseVector {
        ResponseVector {
            values: self.values.select_rows(idx.iter()),
        }
    }
}

fn first_non_finite(m: &DMatrix<f64>) -> Option<(usize, usize)> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Some((i, j));
            }
        }
    }
    None
}
