//! Weighted statistics on nugget sets: between-nugget covariance and its
//! exact decomposition of the full sample covariance, weighted PCA,
//! regression-based quantiles and weighted density grids.

use serde::{Deserialize, Serialize};

use crate::error::{NuggetError, Result};
use crate::linalg::{principal_angles, symmetric_eigen, Mat};
use crate::matrix::DataMatrix;
use crate::nugget::{CenterMode, NuggetSet};
use crate::scalar::{cmp_finite, Scalar};

/// Linear-interpolation sample quantile (type 7) of `values` at level `p`.
///
/// # Panics
/// On empty input.
pub fn quantile_type7<T: Scalar>(values: &[T], p: T) -> T {
    assert!(!values.is_empty(), "quantile of an empty sample");
    let mut v = values.to_vec();
    v.sort_by(cmp_finite);
    let h = T::from_count(v.len() - 1) * p.max(T::zero()).min(T::one());
    let lo = h.floor();
    let i = lo.to_usize().unwrap_or(0).min(v.len() - 1);
    let j = (i + 1).min(v.len() - 1);
    v[i] + (h - lo) * (v[j] - v[i])
}

fn check_weights<T: Scalar>(n: usize, weights: &[T]) -> Result<()> {
    if weights.len() != n {
        return Err(NuggetError::DimensionMismatch { expected: n, found: weights.len() });
    }
    if let Some(i) = weights.iter().position(|&w| !(w > T::zero()) || !w.is_finite()) {
        return Err(NuggetError::param(format!("weight {i} must be positive and finite")));
    }
    Ok(())
}

/// Weighted mean and between-nugget covariance
/// `S_DN = (N - 1)^-1 sum_j w_j (c_j - mu)(c_j - mu)'` with `N = sum_j w_j`.
pub fn weighted_mean_cov<T: Scalar>(nuggets: &NuggetSet<T>) -> Result<(Vec<T>, Mat<T>)> {
    weighted_mean_cov_points(&nuggets.centers()?, &nuggets.weights())
}

/// [`weighted_mean_cov`] over arbitrary weighted points.
pub fn weighted_mean_cov_points<T: Scalar>(points: &DataMatrix<T>, weights: &[T]) -> Result<(Vec<T>, Mat<T>)> {
    check_weights(points.nrows(), weights)?;
    let n: T = weights.iter().copied().sum();
    if n < T::lit(2.0) {
        return Err(NuggetError::param("total weight must be at least 2"));
    }
    let p = points.ncols();
    let mut mean = vec![T::zero(); p];
    for (row, &w) in points.rows().zip(weights) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += w * v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = Mat::zeros(p, p);
    let mut d = vec![T::zero(); p];
    for (row, &w) in points.rows().zip(weights) {
        for ((dk, &v), &m) in d.iter_mut().zip(row).zip(&mean) {
            *dk = v - m;
        }
        cov.add_outer(&d, w);
    }
    Ok((mean, cov.scale(T::one() / (n - T::one()))))
}

/// Full sample covariance split into between- and within-nugget parts.
#[derive(Clone, Debug)]
pub struct CovarianceDecomposition<T> {
    /// Sample covariance of the raw rows about their mean.
    pub s: Mat<T>,
    pub s_dn: Mat<T>,
    /// `(N - 1)^-1 sum_j sum_{i in j} (x_i - c_j)(x_i - c_j)'`, which is
    /// `(N - 1)^-1 sum_j (w_j - 1) Cov(X_j)` when centers are member means.
    pub within: Mat<T>,
    /// `|S - S_DN - within|_F`.
    pub residual_norm: T,
    /// `|S|_F`.
    pub s_norm: T,
}

impl<T: Scalar> CovarianceDecomposition<T> {
    pub fn relative_residual(&self) -> T {
        if self.s_norm > T::zero() { self.residual_norm / self.s_norm } else { self.residual_norm }
    }
}

/// Relative bound on the decomposition residual for mean-centered nuggets.
pub const DECOMPOSITION_TOLERANCE: f64 = 1e-10;

/// [`DECOMPOSITION_TOLERANCE`], widened to the rounding floor of `T`.
pub fn decomposition_tolerance<T: Scalar>() -> T {
    T::lit(DECOMPOSITION_TOLERANCE).max(T::epsilon() * T::lit(1e3))
}

/// Computes both sides of `S = S_DN + within`. For mean-centered nuggets the
/// identity is exact and a residual above the tolerance is an error; for
/// random centers the residual is only reported.
pub fn decompose_covariance<T: Scalar>(x: &DataMatrix<T>, nuggets: &NuggetSet<T>) -> Result<CovarianceDecomposition<T>> {
    let n = x.nrows();
    if nuggets.assignment.len() != n {
        return Err(NuggetError::DimensionMismatch { expected: n, found: nuggets.assignment.len() });
    }
    if nuggets.dim() != x.ncols() {
        return Err(NuggetError::DimensionMismatch { expected: x.ncols(), found: nuggets.dim() });
    }
    if n < 2 {
        return Err(NuggetError::param("need at least two rows"));
    }
    let rows: Vec<usize> = (0..n).collect();
    let (_, s) = crate::linalg::covariance_of_rows(x, &rows);
    let (_, s_dn) = weighted_mean_cov(nuggets)?;
    let p = x.ncols();
    let mut within = Mat::zeros(p, p);
    let mut d = vec![T::zero(); p];
    for (i, &j) in nuggets.assignment.iter().enumerate() {
        let c = &nuggets.nuggets.get(j).ok_or(NuggetError::EmptyNugget(j))?.center;
        for ((dk, &v), &ck) in d.iter_mut().zip(x.row(i)).zip(c) {
            *dk = v - ck;
        }
        within.add_outer(&d, T::one());
    }
    let within = within.scale(T::one() / T::from_count(n - 1));
    let residual_norm = s.sub(&s_dn).sub(&within).frobenius_norm();
    let s_norm = s.frobenius_norm();
    let out = CovarianceDecomposition { s, s_dn, within, residual_norm, s_norm };
    if nuggets.center_mode == CenterMode::Mean {
        let bound = decomposition_tolerance::<T>() * s_norm;
        if residual_norm > bound {
            return Err(NuggetError::IdentityViolation { residual: residual_norm.as_f64(), bound: bound.as_f64() });
        }
    }
    Ok(out)
}

/// Weighted principal components of nugget centers.
#[derive(Clone, Debug)]
pub struct WPCAResult<T> {
    /// `P x q`, orthonormal columns.
    pub loadings: Mat<T>,
    /// Descending.
    pub component_variances: Vec<T>,
    /// `M x q` projections of the centered nugget centers.
    pub scores: Mat<T>,
    pub weighted_mean: Vec<T>,
}

/// Weighted PCA from the eigen-decomposition of `S_DN`.
pub fn wpca<T: Scalar>(nuggets: &NuggetSet<T>, q: usize) -> Result<WPCAResult<T>> {
    wpca_points(&nuggets.centers()?, &nuggets.weights(), q)
}

/// [`wpca`] over arbitrary weighted points.
pub fn wpca_points<T: Scalar>(points: &DataMatrix<T>, weights: &[T], q: usize) -> Result<WPCAResult<T>> {
    let p = points.ncols();
    if q < 1 || q > p {
        return Err(NuggetError::param(format!("component count q = {q} must lie in 1..={p}")));
    }
    let (mean, cov) = weighted_mean_cov_points(points, weights)?;
    let eig = symmetric_eigen(&cov);
    let mut loadings = Mat::zeros(p, q);
    for i in 0..p {
        for c in 0..q {
            loadings[(i, c)] = eig.vectors[(i, c)];
        }
    }
    let component_variances: Vec<T> = eig.values[..q].iter().map(|&v| v.max(T::zero())).collect();
    let mut scores = Mat::zeros(points.nrows(), q);
    for (r, row) in points.rows().enumerate() {
        for c in 0..q {
            let mut s = T::zero();
            for i in 0..p {
                s += (row[i] - mean[i]) * loadings[(i, c)];
            }
            scores[(r, c)] = s;
        }
    }
    Ok(WPCAResult { loadings, component_variances, scores, weighted_mean: mean })
}

/// Principal angles in degrees between the column spans of two orthonormal
/// bases, ascending.
pub fn subspace_angles_degrees<T: Scalar>(a: &Mat<T>, b: &Mat<T>) -> Vec<T> {
    principal_angles(a, b).into_iter().map(|r| r.to_degrees()).collect()
}

/// Which nuggets enter the quantile regression.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "fit")]
pub enum QuantileFit {
    /// All nuggets.
    #[default]
    Global,
    /// Only nuggets whose cumulative proportion is at least `from`.
    Tail { from: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuantileEstimate<T> {
    pub percentile: T,
    pub estimate: T,
    pub regression_slope: T,
    pub regression_intercept: T,
}

/// Quantiles of a one-column nugget set. Nuggets are sorted by center and
/// each is given the cumulative weight proportion up to and including it;
/// a least-squares line of center on proportion is read off at every
/// requested percentile.
pub fn estimate_quantiles<T: Scalar>(nuggets: &NuggetSet<T>, percentiles: &[T], fit: QuantileFit) -> Result<Vec<QuantileEstimate<T>>> {
    if nuggets.dim() != 1 {
        return Err(NuggetError::param(format!("quantiles need one column, got {}", nuggets.dim())));
    }
    let centers: Vec<T> = nuggets.nuggets.iter().map(|n| n.center[0]).collect();
    estimate_quantiles_points(&centers, &nuggets.weights(), percentiles, fit)
}

/// [`estimate_quantiles`] over arbitrary weighted scalars.
pub fn estimate_quantiles_points<T: Scalar>(
    centers: &[T],
    weights: &[T],
    percentiles: &[T],
    fit: QuantileFit,
) -> Result<Vec<QuantileEstimate<T>>> {
    check_weights(centers.len(), weights)?;
    if centers.len() < 2 {
        return Err(NuggetError::param("quantile regression needs at least two nuggets"));
    }
    if let Some(p) = percentiles.iter().find(|&&p| !(p > T::zero() && p < T::one())) {
        return Err(NuggetError::param(format!("percentile {p} must lie in (0, 1)")));
    }
    let mut order: Vec<usize> = (0..centers.len()).collect();
    order.sort_by(|&a, &b| cmp_finite(&centers[a], &centers[b]).then(a.cmp(&b)));
    let total: T = weights.iter().copied().sum();
    let mut cum = T::zero();
    let mut xs = Vec::with_capacity(order.len());
    let mut ys = Vec::with_capacity(order.len());
    for &j in &order {
        cum += weights[j];
        let prop = cum / total;
        let keep = match fit {
            QuantileFit::Global => true,
            QuantileFit::Tail { from } => prop >= T::lit(from),
        };
        if keep {
            xs.push(prop);
            ys.push(centers[j]);
        }
    }
    if xs.len() < 2 {
        return Err(NuggetError::param("fewer than two nuggets in the fitted range"));
    }
    let (intercept, slope) = ols(&xs, &ys)?;
    Ok(percentiles
        .iter()
        .map(|&p| QuantileEstimate { percentile: p, estimate: intercept + slope * p, regression_slope: slope, regression_intercept: intercept })
        .collect())
}

fn ols<T: Scalar>(xs: &[T], ys: &[T]) -> Result<(T, T)> {
    let n = T::from_count(xs.len());
    let mx = xs.iter().copied().sum::<T>() / n;
    let my = ys.iter().copied().sum::<T>() / n;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx == T::zero() {
        return Err(NuggetError::DegenerateRange("all cumulative proportions are equal".into()));
    }
    let slope = sxy / sxx;
    Ok((my - slope * mx, slope))
}

/// Weighted 2-D histogram.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityGrid<T> {
    pub bins: usize,
    pub x_range: (T, T),
    pub y_range: (T, T),
    /// `cells[ix * bins + iy]`.
    pub cells: Vec<T>,
}

impl<T: Scalar> DensityGrid<T> {
    pub fn get(&self, ix: usize, iy: usize) -> T {
        self.cells[ix * self.bins + iy]
    }

    pub fn total(&self) -> T {
        self.cells.iter().copied().sum()
    }
}

pub const DEFAULT_BINS: usize = 100;

/// Weighted histogram over the bounding box of `points`.
pub fn density_grid<T: Scalar>(points: &DataMatrix<T>, weights: &[T], bins: usize) -> Result<DensityGrid<T>> {
    if points.ncols() != 2 {
        return Err(NuggetError::DimensionMismatch { expected: 2, found: points.ncols() });
    }
    let range = |c: usize| {
        points.rows().fold((T::infinity(), T::neg_infinity()), |(lo, hi), r| (lo.min(r[c]), hi.max(r[c])))
    };
    density_grid_in(points, weights, bins, range(0), range(1))
}

/// Weighted histogram over explicit ranges; points outside are dropped and
/// points on the upper edge fall in the last bin.
pub fn density_grid_in<T: Scalar>(
    points: &DataMatrix<T>,
    weights: &[T],
    bins: usize,
    x_range: (T, T),
    y_range: (T, T),
) -> Result<DensityGrid<T>> {
    if points.ncols() != 2 {
        return Err(NuggetError::DimensionMismatch { expected: 2, found: points.ncols() });
    }
    check_weights(points.nrows(), weights)?;
    if bins < 1 {
        return Err(NuggetError::param("bins must be at least 1"));
    }
    for (name, (lo, hi)) in [("x", x_range), ("y", y_range)] {
        if !(hi > lo) || !(hi - lo).is_finite() {
            return Err(NuggetError::DegenerateRange(format!("{name} range [{lo}, {hi}] has no width")));
        }
    }
    let nb = T::from_count(bins);
    let index = |v: T, (lo, hi): (T, T)| -> Option<usize> {
        if v < lo || v > hi {
            return None;
        }
        let f = ((v - lo) / (hi - lo) * nb).floor().to_usize().unwrap_or(0);
        Some(f.min(bins - 1))
    };
    let mut cells = vec![T::zero(); bins * bins];
    for (row, &w) in points.rows().zip(weights) {
        if let (Some(ix), Some(iy)) = (index(row[0], x_range), index(row[1], y_range)) {
            cells[ix * bins + iy] += w;
        }
    }
    Ok(DensityGrid { bins, x_range, y_range, cells })
}

/// Pearson correlation of two grids' cells.
pub fn grid_correlation<T: Scalar>(a: &DensityGrid<T>, b: &DensityGrid<T>) -> Result<T> {
    if a.cells.len() != b.cells.len() {
        return Err(NuggetError::DimensionMismatch { expected: a.cells.len(), found: b.cells.len() });
    }
    pearson(&a.cells, &b.cells)
}

pub(crate) fn pearson<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    let n = T::from_count(a.len());
    let ma = a.iter().copied().sum::<T>() / n;
    let mb = b.iter().copied().sum::<T>() / n;
    let (mut sab, mut saa, mut sbb) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == T::zero() || sbb == T::zero() {
        return Err(NuggetError::DegenerateRange("constant grid".into()));
    }
    Ok(sab / (saa * sbb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduce::build_nuggets;
    use crate::rng::SeedStream;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn tolerance_follows_precision() {
        assert_eq!(decomposition_tolerance::<f64>(), DECOMPOSITION_TOLERANCE);
        assert!(f64::from(decomposition_tolerance::<f32>()) > 1e-5);
    }

    fn gaussian(n: usize, p: usize, seed: u64) -> DataMatrix<f64> {
        let mut rng = SeedStream::new(seed).rng();
        DataMatrix::new(n, p, (0..n * p).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
    }

    fn singletons(x: &DataMatrix<f64>) -> NuggetSet<f64> {
        let a: Vec<usize> = (0..x.nrows()).collect();
        build_nuggets(x, &a, x.nrows(), CenterMode::Mean, 0).unwrap()
    }

    #[test]
    fn type7_quantiles() {
        let v = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(quantile_type7(&v, 0.0), 1.0);
        assert_eq!(quantile_type7(&v, 1.0), 4.0);
        assert_eq!(quantile_type7(&v, 0.5), 2.5);
        assert!((quantile_type7::<f64>(&v, 0.25) - 1.75).abs() < 1e-15);
        assert_eq!(quantile_type7(&[7.0], 0.3), 7.0);
    }

    #[test]
    fn weighted_cov_examples() {
        let one = DataMatrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let (m, c) = weighted_mean_cov_points(&one, &[5.0]).unwrap();
        assert_eq!(m, vec![1.0, 2.0]);
        assert_eq!(c.frobenius_norm(), 0.0);
        let two = DataMatrix::from_column(vec![-1.0, 1.0]).unwrap();
        let (m, c) = weighted_mean_cov_points(&two, &[1.0, 1.0]).unwrap();
        assert_eq!(m, vec![0.0]);
        assert_eq!(c[(0, 0)], 2.0);
        assert!(weighted_mean_cov_points(&one, &[1.0]).is_err());
    }

    #[test]
    fn singleton_nuggets_give_sample_covariance() {
        let x = gaussian(200, 3, 1);
        let (_, sdn) = weighted_mean_cov(&singletons(&x)).unwrap();
        let (_, s) = crate::linalg::covariance_of_rows(&x, &(0..200).collect::<Vec<_>>());
        assert!(sdn.max_abs_diff(&s) < 1e-12);
    }

    #[test]
    fn decomposition_extremes() {
        let x = gaussian(300, 2, 2);
        let d = decompose_covariance(&x, &singletons(&x)).unwrap();
        assert_eq!(d.within.frobenius_norm(), 0.0);
        assert!(d.s.max_abs_diff(&d.s_dn) < 1e-12);
        let one = build_nuggets(&x, &vec![0; 300], 1, CenterMode::Mean, 0).unwrap();
        let d = decompose_covariance(&x, &one).unwrap();
        assert!(d.s_dn.frobenius_norm() < 1e-25);
        assert!(d.s.max_abs_diff(&d.within) < 1e-12);
    }

    #[test]
    fn random_centers_report_without_failing() {
        let x = gaussian(100, 2, 3);
        let labels: Vec<usize> = (0..100).map(|i| i % 5).collect();
        let set = build_nuggets(&x, &labels, 5, CenterMode::Random, 9).unwrap();
        let d = decompose_covariance(&x, &set).unwrap();
        assert!(d.residual_norm > 0.0);
    }

    #[test]
    fn wpca_reduces_to_plain_pca() {
        let x = gaussian(50, 3, 4);
        let w = vec![1.0; 50];
        let r = wpca_points(&x, &w, 3).unwrap();
        let (_, s) = crate::linalg::covariance_of_rows(&x, &(0..50).collect::<Vec<_>>());
        let ident = r.loadings.transpose().matmul(&r.loadings);
        assert!(ident.max_abs_diff(&Mat::identity(3)) < 1e-9);
        // S v = lambda v for every component
        for c in 0..3 {
            let v = r.loadings.column(c);
            let sv = s.matmul(&Mat::from_vec(3, 1, v.clone()));
            for i in 0..3 {
                assert!((sv[(i, 0)] - r.component_variances[c] * v[i]).abs() < 1e-8);
            }
        }
        let total: f64 = r.component_variances.iter().sum();
        assert!((total - s.trace()).abs() < 1e-9 * s.trace());
    }

    #[test]
    fn wpca_on_a_line_is_rank_one() {
        let rows: Vec<[f64; 3]> = (0..20).map(|i| { let t = f64::from(i); [t, 2.0 * t, -t] }).collect();
        let x = DataMatrix::from_rows(&rows).unwrap();
        let r = wpca_points(&x, &[1.0; 20], 3).unwrap();
        assert!(r.component_variances[0] > 1.0);
        assert!(r.component_variances[1] < 1e-10 && r.component_variances[2] < 1e-10);
        assert!(wpca_points(&x, &[1.0; 20], 4).is_err());
    }

    #[test]
    fn quantile_examples() {
        let c: Vec<f64> = (1..=100).map(f64::from).collect();
        let est = estimate_quantiles_points(&c, &[1.0; 100], &[0.95], QuantileFit::Global).unwrap();
        // centers are exactly 100 * proportion
        assert!((est[0].estimate - 95.0).abs() < 1e-9);
        assert!((est[0].regression_slope - 100.0).abs() < 1e-9);
        let two = estimate_quantiles_points(&[1.0, 0.0], &[1.0, 1.0], &[0.95], QuantileFit::Global).unwrap();
        assert!((two[0].estimate - 0.9f64).abs() < 1e-12);
        assert!(estimate_quantiles_points(&[1.0], &[1.0], &[0.5], QuantileFit::Global).is_err());
        assert!(estimate_quantiles_points(&[0.0, 1.0], &[1.0, 1.0], &[1.0], QuantileFit::Global).is_err());
    }

    #[test]
    fn tail_fit_uses_upper_nuggets_only() {
        let c: Vec<f64> = (1..=10).map(|i| f64::from(i * i)).collect();
        let g = estimate_quantiles_points(&c, &[1.0; 10], &[0.95], QuantileFit::Global).unwrap();
        let t = estimate_quantiles_points(&c, &[1.0; 10], &[0.95], QuantileFit::Tail { from: 0.85 }).unwrap();
        // line through (0.9, 81) and (1.0, 100)
        assert!((t[0].estimate - 90.5).abs() < 1e-9);
        assert!(g[0].estimate != t[0].estimate);
    }

    #[test]
    fn density_examples() {
        let one = DataMatrix::from_rows(&[[0.5, 0.5]]).unwrap();
        let g = density_grid_in(&one, &[7.0], 10, (0.0, 1.0), (0.0, 1.0)).unwrap();
        assert_eq!(g.get(5, 5), 7.0);
        assert_eq!(g.total(), 7.0);
        assert!(density_grid(&one, &[7.0], 10).is_err());
        let pts = DataMatrix::from_rows(&[[0.0, 0.0], [1.0, 1.0], [0.5, 0.0], [2.0, 2.0]]).unwrap();
        let g = density_grid_in(&pts, &[1.0; 4], 2, (0.0, 1.0), (0.0, 1.0)).unwrap();
        assert_eq!(g.get(0, 0), 1.0);
        assert_eq!(g.get(1, 1), 1.0);
        assert_eq!(g.get(1, 0), 1.0);
        assert_eq!(g.total(), 3.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn decomposition_identity_holds(seed in any::<u64>(), m in 1usize..40) {
            let x = gaussian(120, 3, seed);
            let labels: Vec<usize> = (0..120).map(|i| i % m).collect();
            let set = build_nuggets(&x, &labels, m, CenterMode::Mean, 0).unwrap();
            let d = decompose_covariance(&x, &set).unwrap();
            prop_assert!(d.residual_norm <= 1e-10 * d.s_norm);
        }

        #[test]
        fn wpca_total_variance_and_scaling(seed in any::<u64>(), alpha in 0.1f64..10.0) {
            let mut rng = SeedStream::new(seed).rng();
            let x = gaussian(30, 4, seed);
            let w: Vec<f64> = (0..30).map(|_| rng.random_range(1..10) as f64).collect();
            let r = wpca_points(&x, &w, 4).unwrap();
            let (_, s) = weighted_mean_cov_points(&x, &w).unwrap();
            let tot: f64 = r.component_variances.iter().sum();
            prop_assert!((tot - s.trace()).abs() <= 1e-9 * s.trace());
            let scaled = DataMatrix::new(30, 4, x.as_slice().iter().map(|v| v * alpha).collect()).unwrap();
            let r2 = wpca_points(&scaled, &w, 4).unwrap();
            for c in 0..4 {
                prop_assert!((r2.component_variances[c] - alpha * alpha * r.component_variances[c]).abs() <= 1e-8 * r2.component_variances[0]);
            }
            for c in 0..2 {
                for i in 0..4 {
                    prop_assert!((r2.loadings[(i, c)] - r.loadings[(i, c)]).abs() < 1e-6);
                }
            }
        }

        #[test]
        fn quantiles_increase(seed in any::<u64>()) {
            let mut rng = SeedStream::new(seed).rng();
            let c: Vec<f64> = (0..50).map(|_| rng.sample(StandardNormal)).collect();
            let w: Vec<f64> = (0..50).map(|_| rng.random_range(1..20) as f64).collect();
            let ps = [0.95, 0.96, 0.97, 0.98, 0.99];
            let est = estimate_quantiles_points(&c, &w, &ps, QuantileFit::Global).unwrap();
            prop_assert!(est.windows(2).all(|e| e[1].estimate > e[0].estimate));
        }

        #[test]
        fn density_mass_is_conserved(seed in any::<u64>()) {
            let mut rng = SeedStream::new(seed).rng();
            let x = gaussian(200, 2, seed);
            let w: Vec<f64> = (0..200).map(|_| rng.random_range(1..5) as f64).collect();
            let g = density_grid(&x, &w, 17).unwrap();
            prop_assert!((g.total() - w.iter().sum::<f64>()).abs() < 1e-9);
            let clipped = density_grid_in(&x, &w, 17, (-1.0, 1.0), (-1.0, 1.0)).unwrap();
            let inside: f64 = x.rows().zip(&w).filter(|(r, _)| r.iter().all(|v| v.abs() <= 1.0)).map(|(_, w)| w).sum();
            prop_assert!((clipped.total() - inside).abs() < 1e-9);
        }
    }
}
