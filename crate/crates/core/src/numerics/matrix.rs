use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major 2-D array of finite `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite entry at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        let data = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::new(rows.len(), cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    /// Copy of `self` with every entry multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.rows, self.cols, self.data.iter().map(|x| x * factor).collect())
    }

    /// Output-side constructor: rejects non-finite results as an overflow.
    pub(crate) fn from_output(rows: usize, cols: usize, data: Vec<f64>, mode: &'static str) -> Result<Self> {
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NumericOverflow {
                mode,
                row: Some(pos / cols.max(1)),
                detail: "non-finite output entry".into(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub(crate) fn same_shape(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }
}

/// Largest row-wise normwise relative error `max_i ||a_i - b_i||_inf / ||b_i||_inf`.
///
/// Rows where the reference is identically zero fall back to absolute error.
pub fn max_relative_error(actual: &DenseMatrix, reference: &DenseMatrix) -> Result<f64> {
    if !actual.same_shape(reference) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            actual.rows, actual.cols, reference.rows, reference.cols
        )));
    }
    let mut worst = 0.0f64;
    for (a, b) in actual.iter_rows().zip(reference.iter_rows()) {
        let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let norm = b.iter().map(|y| y.abs()).fold(0.0, f64::max);
        let err = if norm > 0.0 { diff / norm } else { diff };
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_length() {
        assert!(matches!(
            DenseMatrix::new(2, 2, vec![0.0; 3]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(DenseMatrix::new(1, 2, vec![0.0, f64::NAN]).is_err());
        assert!(DenseMatrix::new(1, 2, vec![f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn row_access() {
        let m = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.row(1), &[3.0, 4.0]);
        assert_eq!(m.get(0, 1), 2.0);
        assert_eq!(m.iter_rows().count(), 2);
    }

    #[test]
    fn relative_error_is_rowwise() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(max_relative_error(&a, &b).unwrap(), 0.5);
        assert_eq!(max_relative_error(&b, &b).unwrap(), 0.0);
    }
}
