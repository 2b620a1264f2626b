//! Small dense linear algebra: covariance accumulation, a cyclic Jacobi
//! eigensolver for symmetric matrices, Gram-Schmidt orthonormalisation and
//! principal angles between subspaces.

use crate::matrix::DataMatrix;
use crate::scalar::{cmp_finite, Scalar};

/// Dense row-major matrix without the finiteness invariant of
/// [`DataMatrix`]; used for covariances, loadings and rotations.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "shape does not match data length");
        Self { rows, cols, data }
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let data = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::from_vec(rows.len(), cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect();
        Self { rows: self.rows, cols: self.cols, data }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect();
        Self { rows: self.rows, cols: self.cols, data }
    }

    pub fn scale(&self, s: T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| v * s).collect() }
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Largest absolute entry-wise difference.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data.iter().zip(&other.data).map(|(&a, &b)| (a - b).abs()).fold(T::zero(), T::max)
    }

    /// Accumulates `weight * v v'` into a square matrix.
    #[inline]
    pub fn add_outer(&mut self, v: &[T], weight: T) {
        debug_assert_eq!(self.rows, v.len());
        for i in 0..v.len() {
            let wi = weight * v[i];
            if wi == T::zero() {
                continue;
            }
            let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
            for (r, &vj) in row.iter_mut().zip(v) {
                *r += wi * vj;
            }
        }
    }
}

impl<T> std::ops::Index<(usize, usize)> for Mat<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Mat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Sample covariance (divisor `n - 1`) of the selected rows, computed about
/// their mean. Returns `(mean, covariance)`; the covariance is zero when
/// fewer than two rows are selected.
pub fn covariance_of_rows<T: Scalar>(x: &DataMatrix<T>, rows: &[usize]) -> (Vec<T>, Mat<T>) {
    let p = x.ncols();
    let mut mean = vec![T::zero(); p];
    for &i in rows {
        for (m, &v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    if !rows.is_empty() {
        let n = T::from_count(rows.len());
        mean.iter_mut().for_each(|m| *m /= n);
    }
    let mut cov = Mat::zeros(p, p);
    if rows.len() < 2 {
        return (mean, cov);
    }
    let mut d = vec![T::zero(); p];
    for &i in rows {
        for ((dk, &v), &m) in d.iter_mut().zip(x.row(i)).zip(&mean) {
            *dk = v - m;
        }
        cov.add_outer(&d, T::one());
    }
    let denom = T::from_count(rows.len() - 1);
    (mean, cov.scale(T::one() / denom))
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Clone, Debug)]
pub struct SymmetricEigen<T> {
    /// Eigenvalues in descending order.
    pub values: Vec<T>,
    /// Eigenvectors as columns, matching `values`. Each column is signed so
    /// that its largest-magnitude entry is positive.
    pub vectors: Mat<T>,
}

/// Cyclic Jacobi eigensolver for a symmetric matrix.
///
/// Only the upper triangle is read. Converges quadratically; the loop stops
/// once the off-diagonal mass is negligible relative to the diagonal.
pub fn symmetric_eigen<T: Scalar>(a: &Mat<T>) -> SymmetricEigen<T> {
    let n = a.rows();
    assert_eq!(n, a.cols(), "matrix must be square");
    let mut m = a.clone();
    for i in 0..n {
        for j in 0..i {
            m[(i, j)] = m[(j, i)];
        }
    }
    let mut v = Mat::identity(n);
    let eps = T::epsilon();

    for _sweep in 0..100 {
        let off: T = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| m[(i, j)] * m[(i, j)]).sum();
        let diag: T = (0..n).map(|i| m[(i, i)] * m[(i, i)]).sum();
        if off <= eps * eps * diag || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                m[(p, q)] = T::zero();
                m[(q, p)] = T::zero();
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| cmp_finite(&m[(j, j)], &m[(i, i)]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = v.column(src);
        let mut pivot = 0;
        for (k, c) in col.iter().enumerate() {
            if c.abs() > col[pivot].abs() {
                pivot = k;
            }
        }
        let sign = if col[pivot] < T::zero() { -T::one() } else { T::one() };
        for (k, &c) in col.iter().enumerate() {
            vectors[(k, dst)] = sign * c;
        }
    }
    SymmetricEigen { values, vectors }
}

/// Largest eigenvalue of a symmetric matrix.
pub fn largest_symmetric_eigenvalue<T: Scalar>(a: &Mat<T>) -> T {
    match a.rows() {
        0 => T::zero(),
        1 => a[(0, 0)],
        _ => symmetric_eigen(a).values[0],
    }
}

/// Orthonormalises the columns of `a` with two passes of modified
/// Gram-Schmidt. Columns must be linearly independent.
pub fn orthonormalize_columns<T: Scalar>(a: &Mat<T>) -> Mat<T> {
    let (n, k) = (a.rows(), a.cols());
    let mut q: Vec<Vec<T>> = (0..k).map(|j| a.column(j)).collect();
    for j in 0..k {
        for _pass in 0..2 {
            for i in 0..j {
                let (done, rest) = q.split_at_mut(j);
                let qi = &done[i];
                let proj: T = qi.iter().zip(rest[0].iter()).map(|(&x, &y)| x * y).sum();
                for (y, &x) in rest[0].iter_mut().zip(qi) {
                    *y -= proj * x;
                }
            }
        }
        let norm = q[j].iter().map(|&v| v * v).sum::<T>().sqrt();
        q[j].iter_mut().for_each(|v| *v /= norm);
    }
    let mut out = Mat::zeros(n, k);
    for (j, col) in q.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    out
}

/// Principal angles (radians, ascending) between the column spaces of two
/// matrices with orthonormal columns.
pub fn principal_angles<T: Scalar>(a: &Mat<T>, b: &Mat<T>) -> Vec<T> {
    assert_eq!(a.rows(), b.rows(), "subspaces must live in the same space");
    let m = a.transpose().matmul(b);
    let gram = m.transpose().matmul(&m);
    let eig = symmetric_eigen(&gram);
    let mut angles: Vec<T> = eig
        .values
        .iter()
        .map(|&l| l.max(T::zero()).sqrt().min(T::one()).acos())
        .collect();
    angles.sort_by(cmp_finite);
    angles
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn eigen_of_diagonal_and_rank_one() {
        let a = Mat::from_rows(&[[2.0, 0.0], [0.0, 0.0]]);
        let e = symmetric_eigen(&a);
        assert_eq!(e.values, vec![2.0, 0.0]);
        let b = Mat::from_rows(&[[0.5, 0.5], [0.5, 0.5]]);
        let e = symmetric_eigen(&b);
        assert!(approx(e.values[0], 1.0, 1e-14));
        assert!(e.values[1].abs() < 1e-14);
        // sign convention: largest-magnitude entry positive
        assert!(e.vectors[(0, 0)] > 0.0 && e.vectors[(1, 0)] > 0.0);
    }

    #[test]
    fn eigen_reconstructs_matrix() {
        let a = Mat::from_rows(&[[4.0, 1.0, -2.0, 0.5], [1.0, 3.0, 0.0, 1.0], [-2.0, 0.0, 5.0, -1.0], [0.5, 1.0, -1.0, 2.0]]);
        let e = symmetric_eigen(&a);
        let mut d = Mat::zeros(4, 4);
        for i in 0..4 {
            d[(i, i)] = e.values[i];
        }
        let back = e.vectors.matmul(&d).matmul(&e.vectors.transpose());
        assert!(back.max_abs_diff(&a) < 1e-12);
        let vtv = e.vectors.transpose().matmul(&e.vectors);
        assert!(vtv.max_abs_diff(&Mat::identity(4)) < 1e-12);
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn gram_schmidt_gives_orthonormal_columns() {
        let a = Mat::from_rows(&[[1.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 1.0], [1.0, 2.0, 3.0]]);
        let q = orthonormalize_columns(&a);
        assert!(q.transpose().matmul(&q).max_abs_diff(&Mat::identity(3)) < 1e-14);
    }

    #[test]
    fn principal_angles_of_known_planes() {
        let a = Mat::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]);
        let t = 0.3f64;
        let b = Mat::from_rows(&[[1.0, 0.0], [0.0, t.cos()], [0.0, t.sin()]]);
        let ang = principal_angles(&a, &b);
        assert!(ang[0].abs() < 1e-7);
        assert!(approx(ang[1], t, 1e-12));
    }

    #[test]
    fn covariance_of_two_points() {
        let x = DataMatrix::from_rows(&[[0.0, 0.0], [2.0, 0.0]]).unwrap();
        let (mean, cov) = covariance_of_rows(&x, &[0, 1]);
        assert_eq!(mean, vec![1.0, 0.0]);
        assert_eq!(cov, Mat::from_rows(&[[2.0, 0.0], [0.0, 0.0]]));
    }
}
