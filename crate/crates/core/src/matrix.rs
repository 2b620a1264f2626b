//! Dense row-major observation matrix.

use std::collections::HashSet;

use serde::Serialize;

use crate::error::{NuggetError, Result};
use crate::scalar::Scalar;

/// `N x P` matrix of finite observations, stored row-major.
///
/// Construction rejects empty shapes and non-finite entries, so every
/// `DataMatrix` in the program satisfies those invariants.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DataMatrix<T> {
    values: Vec<T>,
    nrows: usize,
    ncols: usize,
    row_ids: Option<Vec<String>>,
}

impl<T: Scalar> DataMatrix<T> {
    pub fn new(nrows: usize, ncols: usize, values: Vec<T>) -> Result<Self> {
        if nrows == 0 || ncols == 0 {
            return Err(NuggetError::Empty(format!("matrix shape {nrows}x{ncols}")));
        }
        if values.len() != nrows * ncols {
            return Err(NuggetError::DimensionMismatch { expected: nrows * ncols, found: values.len() });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(NuggetError::NonFinite { row: pos / ncols, col: pos % ncols });
        }
        Ok(Self { values, nrows, ncols, row_ids: None })
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or_else(|| NuggetError::Empty("no rows".into()))?;
        let ncols = first.as_ref().len();
        let mut values = Vec::with_capacity(rows.len() * ncols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != ncols {
                return Err(NuggetError::DimensionMismatch { expected: ncols, found: r.len() });
            }
            values.extend_from_slice(r);
        }
        Self::new(rows.len(), ncols, values)
    }

    /// Single-column matrix.
    pub fn from_column(values: Vec<T>) -> Result<Self> {
        let n = values.len();
        Self::new(n, 1, values)
    }

    pub fn with_row_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.nrows {
            return Err(NuggetError::DimensionMismatch { expected: self.nrows, found: ids.len() });
        }
        self.row_ids = Some(ids);
        Ok(self)
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.values.chunks_exact(self.ncols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.ncols + j]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn row_ids(&self) -> Option<&[String]> {
        self.row_ids.as_deref()
    }

    /// New matrix holding the given rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        if idx.is_empty() {
            return Err(NuggetError::Empty("row selection".into()));
        }
        let mut values = Vec::with_capacity(idx.len() * self.ncols);
        for &i in idx {
            if i >= self.nrows {
                return Err(NuggetError::param(format!("row {i} out of range for {} rows", self.nrows)));
            }
            values.extend_from_slice(self.row(i));
        }
        let ids = self.row_ids.as_ref().map(|ids| idx.iter().map(|&i| ids[i].clone()).collect());
        Ok(Self { values, nrows: idx.len(), ncols: self.ncols, row_ids: ids })
    }

    /// Column means.
    pub fn column_means(&self) -> Vec<T> {
        let mut mean = vec![T::zero(); self.ncols];
        for r in self.rows() {
            for (m, &v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        let n = T::from_count(self.nrows);
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    /// Converts every entry to another scalar type.
    pub fn cast<U: Scalar>(&self) -> DataMatrix<U> {
        DataMatrix {
            values: self.values.iter().map(|v| U::lit(v.as_f64())).collect(),
            nrows: self.nrows,
            ncols: self.ncols,
            row_ids: self.row_ids.clone(),
        }
    }
}

/// Findings from [`validate_matrix`] / [`MatrixReport::inspect`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct MatrixReport {
    pub nrows: usize,
    pub ncols: usize,
    /// `(row, col)` of every NaN or infinite entry.
    pub non_finite: Vec<(usize, usize)>,
    /// Columns whose entries are all equal.
    pub constant_columns: Vec<usize>,
    /// Rows that repeat an earlier row exactly.
    pub duplicate_rows: usize,
}

impl MatrixReport {
    /// Inspects raw row-major values that may not yet satisfy the
    /// `DataMatrix` invariants.
    pub fn inspect<T: Scalar>(nrows: usize, ncols: usize, values: &[T]) -> Self {
        let mut report = MatrixReport { nrows, ncols, ..Default::default() };
        if ncols == 0 || values.len() != nrows * ncols {
            return report;
        }
        for (pos, v) in values.iter().enumerate() {
            if !v.is_finite() {
                report.non_finite.push((pos / ncols, pos % ncols));
            }
        }
        if nrows > 0 {
            for j in 0..ncols {
                let first = values[j];
                if (0..nrows).all(|i| values[i * ncols + j] == first) {
                    report.constant_columns.push(j);
                }
            }
        }
        let mut seen: HashSet<Vec<u64>> = HashSet::with_capacity(nrows);
        for row in values.chunks_exact(ncols) {
            // +0.0 and -0.0 compare equal, so normalise before hashing bits.
            let key: Vec<u64> = row.iter().map(|v| (v.as_f64() + 0.0).to_bits()).collect();
            if !seen.insert(key) {
                report.duplicate_rows += 1;
            }
        }
        report
    }

    pub fn is_ok(&self) -> bool {
        self.non_finite.is_empty() && self.nrows > 0 && self.ncols > 0
    }
}

/// Structured report on a matrix: non-finite cells, constant columns and
/// duplicate rows. Never fails.
pub fn validate_matrix<T: Scalar>(x: &DataMatrix<T>) -> MatrixReport {
    MatrixReport::inspect(x.nrows(), x.ncols(), x.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_matrix_is_ok() {
        let x = DataMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 7.0]]).unwrap();
        let r = validate_matrix(&x);
        assert!(r.is_ok());
        assert!(r.constant_columns.is_empty());
        assert_eq!(r.duplicate_rows, 0);
    }

    #[test]
    fn nan_location_reported() {
        let vals = vec![1.0, 2.0, 3.0, 4.0, 5.0, f64::NAN];
        let r = MatrixReport::inspect(3, 2, &vals);
        assert_eq!(r.non_finite, vec![(2, 1)]);
        assert!(!r.is_ok());
        assert!(matches!(DataMatrix::new(3, 2, vals), Err(NuggetError::NonFinite { row: 2, col: 1 })));
    }

    #[test]
    fn duplicates_and_constant_columns() {
        let x = DataMatrix::from_rows(&[[1.0, 0.0], [1.0, 0.0], [2.0, 0.0]]).unwrap();
        let r = validate_matrix(&x);
        assert_eq!(r.duplicate_rows, 1);
        assert_eq!(r.constant_columns, vec![1]);
    }

    #[test]
    fn rejects_empty_and_ragged() {
        assert!(DataMatrix::<f64>::new(0, 2, vec![]).is_err());
        assert!(DataMatrix::from_rows(&[vec![1.0, 2.0], vec![1.0]]).is_err());
        assert!(DataMatrix::new(1, 2, vec![0.0f32, f32::INFINITY]).is_err());
    }

    #[test]
    fn select_rows_keeps_order() {
        let x = DataMatrix::from_rows(&[[0.0], [1.0], [2.0]]).unwrap();
        let s = x.select_rows(&[2, 0]).unwrap();
        assert_eq!(s.as_slice(), &[2.0, 0.0]);
        assert!(x.select_rows(&[3]).is_err());
    }
}
