//! K-means for weighted observations over nugget centers.
//!
//! The objective is the weighted within-cluster sum of squares
//! `Omega = sum_k sum_{j in L_k} w_j |c_j - mu_k|^2` with `mu_k` the weighted
//! mean of cluster `k`. Each start draws `K` distinct nugget centers, assigns
//! every nugget to its nearest center, and then sweeps the nuggets in index
//! order moving each one to whichever cluster lowers `Omega` most. Moves that
//! would empty a cluster are never made.

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NuggetError, Result};
use crate::matrix::DataMatrix;
use crate::metric::DistanceMetric;
use crate::nugget::NuggetSet;
use crate::rng::SeedStream;
use crate::scalar::{cmp_finite, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WKMeansParams {
    pub k: usize,
    pub starts: usize,
    pub max_sweeps: usize,
    pub seed: u64,
}

impl WKMeansParams {
    pub const DEFAULT_STARTS: usize = 10;
    pub const DEFAULT_MAX_SWEEPS: usize = 100;
    /// Retries of a start whose initial assignment leaves a cluster empty.
    pub const INIT_RETRIES: usize = 10;
    /// Minimum decrease in `Omega` for a move to be made.
    pub const MOVE_TOLERANCE: f64 = 1e-12;

    pub fn new(k: usize) -> Self {
        Self { k, starts: Self::DEFAULT_STARTS, max_sweeps: Self::DEFAULT_MAX_SWEEPS, seed: 0 }
    }

    pub fn with_starts(mut self, starts: usize) -> Self {
        self.starts = starts;
        self
    }

    pub fn with_max_sweeps(mut self, sweeps: usize) -> Self {
        self.max_sweeps = sweeps;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if self.k < 1 {
            return Err(NuggetError::param("K must be at least 1"));
        }
        if self.k > m {
            return Err(NuggetError::param(format!("K = {} exceeds the {m} points", self.k)));
        }
        if self.starts < 1 {
            return Err(NuggetError::param("starts must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Clustering<T> {
    /// Cluster of every point.
    pub assignment: Vec<usize>,
    /// `K x P` weighted cluster means.
    pub centers: DataMatrix<T>,
    pub wwcss: T,
    pub sweeps: usize,
    pub converged: bool,
    /// Index of the start that produced this result.
    pub start: usize,
}

impl<T: Scalar> Clustering<T> {
    pub fn k(&self) -> usize {
        self.centers.nrows()
    }

    /// Total weight of every cluster.
    pub fn cluster_weights(&self, weights: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.k()];
        for (&c, &w) in self.assignment.iter().zip(weights) {
            out[c] += w;
        }
        out
    }
}

/// A move made during the sweep phase.
#[derive(Clone, Copy, Debug)]
pub struct MoveEvent<'a, T> {
    pub sweep: usize,
    pub point: usize,
    pub from: usize,
    pub to: usize,
    /// Change in `Omega` predicted by the update formula (negative).
    pub delta: T,
    /// Assignment after the move.
    pub assignment: &'a [usize],
}

fn check_points<T: Scalar>(points: &DataMatrix<T>, weights: &[T]) -> Result<()> {
    if weights.len() != points.nrows() {
        return Err(NuggetError::DimensionMismatch { expected: points.nrows(), found: weights.len() });
    }
    if let Some(i) = weights.iter().position(|&w| !(w > T::zero()) || !w.is_finite()) {
        return Err(NuggetError::param(format!("weight {i} must be positive and finite")));
    }
    Ok(())
}

/// Weighted means of every cluster; errors if a cluster is empty.
pub fn weighted_cluster_means<T: Scalar>(points: &DataMatrix<T>, weights: &[T], assignment: &[usize], k: usize) -> Result<DataMatrix<T>> {
    let p = points.ncols();
    let mut sums = vec![T::zero(); k * p];
    let mut tot = vec![T::zero(); k];
    for (i, &c) in assignment.iter().enumerate() {
        if c >= k {
            return Err(NuggetError::param(format!("cluster label {c} out of range for K = {k}")));
        }
        tot[c] += weights[i];
        for (s, &v) in sums[c * p..(c + 1) * p].iter_mut().zip(points.row(i)) {
            *s += weights[i] * v;
        }
    }
    for (c, &t) in tot.iter().enumerate() {
        if t == T::zero() {
            return Err(NuggetError::EmptyCluster(c));
        }
        for s in &mut sums[c * p..(c + 1) * p] {
            *s /= t;
        }
    }
    DataMatrix::new(k, p, sums)
}

/// `Omega` of an assignment against the given cluster centers.
pub fn wwcss_points<T: Scalar>(points: &DataMatrix<T>, weights: &[T], assignment: &[usize], centers: &DataMatrix<T>) -> Result<T> {
    check_points(points, weights)?;
    if assignment.len() != points.nrows() {
        return Err(NuggetError::DimensionMismatch { expected: points.nrows(), found: assignment.len() });
    }
    if centers.ncols() != points.ncols() {
        return Err(NuggetError::DimensionMismatch { expected: points.ncols(), found: centers.ncols() });
    }
    let k = centers.nrows();
    let mut seen = vec![false; k];
    let mut total = T::zero();
    for (i, &c) in assignment.iter().enumerate() {
        if c >= k {
            return Err(NuggetError::param(format!("cluster label {c} out of range for K = {k}")));
        }
        seen[c] = true;
        total += weights[i] * DistanceMetric::Euclidean.key(points.row(i), centers.row(c));
    }
    if let Some(c) = seen.iter().position(|&s| !s) {
        return Err(NuggetError::EmptyCluster(c));
    }
    Ok(total)
}

/// `Omega` of a nugget-level assignment.
pub fn wwcss<T: Scalar>(nuggets: &NuggetSet<T>, assignment: &[usize], centers: &DataMatrix<T>) -> Result<T> {
    wwcss_points(&nuggets.centers()?, &nuggets.weights(), assignment, centers)
}

/// Clusters the nugget centers, weighted by nugget weight.
pub fn weighted_kmeans<T: Scalar>(nuggets: &NuggetSet<T>, params: &WKMeansParams) -> Result<Clustering<T>> {
    weighted_kmeans_points(&nuggets.centers()?, &nuggets.weights(), params)
}

/// Multi-start weighted K-means over arbitrary weighted points. Returns the
/// start with the lowest `Omega`, the earliest start on ties.
pub fn weighted_kmeans_points<T: Scalar>(points: &DataMatrix<T>, weights: &[T], params: &WKMeansParams) -> Result<Clustering<T>> {
    check_points(points, weights)?;
    params.validate(points.nrows())?;
    let root = SeedStream::new(params.seed).child("wkmeans");
    let results: Vec<Result<Clustering<T>>> = (0..params.starts)
        .into_par_iter()
        .map(|s| {
            let init = initial_centers(points, params.k, root.index(s as u64)).ok_or(NuggetError::InitializationFailed(s))?;
            let mut c = weighted_kmeans_from(points, weights, &init, params.max_sweeps, |_| {})?;
            c.start = s;
            Ok(c)
        })
        .collect();
    let mut best: Option<Clustering<T>> = None;
    for r in results {
        let c = r?;
        if best.as_ref().is_none_or(|b| c.wwcss < b.wwcss) {
            best = Some(c);
        }
    }
    Ok(best.expect("at least one start"))
}

/// Draws `k` distinct points as initial centers, redrawing when the nearest
/// assignment leaves a cluster empty.
fn initial_centers<T: Scalar>(points: &DataMatrix<T>, k: usize, stream: SeedStream) -> Option<DataMatrix<T>> {
    for attempt in 0..=WKMeansParams::INIT_RETRIES {
        let mut rng = stream.index(attempt as u64).rng();
        let idx = sample(&mut rng, points.nrows(), k).into_vec();
        let centers = points.select_rows(&idx).ok()?;
        let labels = nearest(points, &centers);
        let mut used = vec![false; k];
        for &l in &labels {
            used[l] = true;
        }
        if used.iter().all(|&u| u) {
            return Some(centers);
        }
    }
    None
}

fn nearest<T: Scalar>(points: &DataMatrix<T>, centers: &DataMatrix<T>) -> Vec<usize> {
    points
        .rows()
        .map(|row| {
            let mut best = (T::infinity(), 0);
            for (c, mu) in centers.rows().enumerate() {
                let d = DistanceMetric::Euclidean.key(row, mu);
                if d < best.0 {
                    best = (d, c);
                }
            }
            best.1
        })
        .collect()
}

/// One start from explicit initial centers: nearest assignment, weighted
/// means, then single-point move sweeps until a sweep moves nothing or
/// `max_sweeps` sweeps have run. `observer` sees every move.
pub fn weighted_kmeans_from<T: Scalar, F>(
    points: &DataMatrix<T>,
    weights: &[T],
    init: &DataMatrix<T>,
    max_sweeps: usize,
    mut observer: F,
) -> Result<Clustering<T>>
where
    F: FnMut(&MoveEvent<'_, T>),
{
    check_points(points, weights)?;
    if init.ncols() != points.ncols() {
        return Err(NuggetError::DimensionMismatch { expected: points.ncols(), found: init.ncols() });
    }
    let k = init.nrows();
    let p = points.ncols();
    let mut assignment = nearest(points, init);
    let mut tot = vec![T::zero(); k];
    let mut sums = vec![T::zero(); k * p];
    let mut means = vec![T::zero(); k * p];
    let refresh = |assignment: &[usize], tot: &mut Vec<T>, sums: &mut Vec<T>, means: &mut Vec<T>| -> Result<()> {
        tot.iter_mut().for_each(|t| *t = T::zero());
        sums.iter_mut().for_each(|s| *s = T::zero());
        for (i, &c) in assignment.iter().enumerate() {
            tot[c] += weights[i];
            for (s, &v) in sums[c * p..(c + 1) * p].iter_mut().zip(points.row(i)) {
                *s += weights[i] * v;
            }
        }
        for c in 0..k {
            if tot[c] == T::zero() {
                return Err(NuggetError::EmptyCluster(c));
            }
            for d in 0..p {
                means[c * p + d] = sums[c * p + d] / tot[c];
            }
        }
        Ok(())
    };
    refresh(&assignment, &mut tot, &mut sums, &mut means)?;
    let tol = T::lit(WKMeansParams::MOVE_TOLERANCE);
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut moved = false;
        for i in 0..points.nrows() {
            let a = assignment[i];
            let w = weights[i];
            let wa = tot[a];
            if wa - w <= T::zero() {
                continue;
            }
            let x = points.row(i);
            let remove = w * wa / (wa - w) * DistanceMetric::Euclidean.key(x, &means[a * p..(a + 1) * p]);
            let mut best = (T::infinity(), a);
            for b in (0..k).filter(|&b| b != a) {
                let wb = tot[b];
                let add = w * wb / (wb + w) * DistanceMetric::Euclidean.key(x, &means[b * p..(b + 1) * p]);
                if add < best.0 {
                    best = (add, b);
                }
            }
            let delta = best.0 - remove;
            // guard against accepting rounding noise on heavy points
            let noise = T::epsilon() * T::lit(64.0) * (best.0 + remove);
            if !(delta < -(tol + noise)) {
                continue;
            }
            let b = best.1;
            assignment[i] = b;
            tot[a] -= w;
            tot[b] += w;
            for d in 0..p {
                sums[a * p + d] -= w * x[d];
                sums[b * p + d] += w * x[d];
                means[a * p + d] = sums[a * p + d] / tot[a];
                means[b * p + d] = sums[b * p + d] / tot[b];
            }
            moved = true;
            observer(&MoveEvent { sweep: sweeps, point: i, from: a, to: b, delta, assignment: &assignment });
        }
        // drop drift from the incremental sums
        refresh(&assignment, &mut tot, &mut sums, &mut means)?;
        if !moved {
            converged = true;
            break;
        }
    }
    let centers = DataMatrix::new(k, p, means)?;
    let wwcss = wwcss_points(points, weights, &assignment, &centers)?;
    Ok(Clustering { assignment, centers, wwcss, sweeps, converged, start: 0 })
}

/// Best one-point move available from `clustering`, as `(point, to, delta)`,
/// if any lowers `Omega` by more than the move tolerance. Used to verify
/// local optimality.
pub fn best_single_move<T: Scalar>(points: &DataMatrix<T>, weights: &[T], clustering: &Clustering<T>) -> Option<(usize, usize, T)> {
    let k = clustering.k();
    let tot = clustering.cluster_weights(weights);
    let mut best: Option<(usize, usize, T)> = None;
    for i in 0..points.nrows() {
        let a = clustering.assignment[i];
        let w = weights[i];
        if tot[a] - w <= T::zero() {
            continue;
        }
        let x = points.row(i);
        let remove = w * tot[a] / (tot[a] - w) * DistanceMetric::Euclidean.key(x, clustering.centers.row(a));
        for b in (0..k).filter(|&b| b != a) {
            let add = w * tot[b] / (tot[b] + w) * DistanceMetric::Euclidean.key(x, clustering.centers.row(b));
            let delta = add - remove;
            let noise = T::epsilon() * T::lit(64.0) * (add + remove);
            if delta < -(T::lit(WKMeansParams::MOVE_TOLERANCE) + noise) && best.is_none_or(|(_, _, d)| delta < d) {
                best = Some((i, b, delta));
            }
        }
    }
    best
}

/// Optimal matching of predicted to true labels.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Alignment {
    /// Weighted fraction of points whose predicted label maps to the truth.
    pub accuracy: f64,
    /// `mapping[predicted] = truth`.
    pub mapping: Vec<usize>,
    /// Per true label: weighted fraction of its points predicted into the
    /// cluster mapped to it.
    pub per_cluster: Vec<f64>,
}

/// Largest number of labels scored by exhaustive subset search; larger
/// label sets use the Hungarian method.
pub const EXHAUSTIVE_LABEL_LIMIT: usize = 12;

/// Best weighted accuracy over all one-to-one relabellings of `predicted`.
pub fn best_permutation_accuracy(predicted: &[usize], truth: &[usize], weights: &[f64]) -> Result<f64> {
    Ok(align_labels(predicted, truth, weights)?.accuracy)
}

/// [`best_permutation_accuracy`] with the label mapping and per-cluster
/// recovery rates.
pub fn align_labels(predicted: &[usize], truth: &[usize], weights: &[f64]) -> Result<Alignment> {
    if predicted.len() != truth.len() {
        return Err(NuggetError::DimensionMismatch { expected: truth.len(), found: predicted.len() });
    }
    if weights.len() != truth.len() {
        return Err(NuggetError::DimensionMismatch { expected: truth.len(), found: weights.len() });
    }
    if truth.is_empty() {
        return Err(NuggetError::Empty("no labels to align".into()));
    }
    let k = predicted.iter().chain(truth).max().map_or(0, |&m| m + 1);
    let mut conf = vec![vec![0.0; k]; k];
    let mut truth_weight = vec![0.0; k];
    for ((&p, &t), &w) in predicted.iter().zip(truth).zip(weights) {
        conf[p][t] += w;
        truth_weight[t] += w;
    }
    let total: f64 = weights.iter().sum();
    let mapping = if k <= EXHAUSTIVE_LABEL_LIMIT { subset_dp(&conf) } else { hungarian_max(&conf) };
    let matched: f64 = mapping.iter().enumerate().map(|(p, &t)| conf[p][t]).sum();
    let per_cluster = (0..k)
        .map(|t| {
            let p = mapping.iter().position(|&m| m == t).expect("mapping is a permutation");
            if truth_weight[t] > 0.0 { conf[p][t] / truth_weight[t] } else { 0.0 }
        })
        .collect();
    Ok(Alignment { accuracy: matched / total, mapping, per_cluster })
}

/// Maximum-weight perfect matching by dynamic programming over subsets of
/// true labels.
fn subset_dp(conf: &[Vec<f64>]) -> Vec<usize> {
    let k = conf.len();
    let full = 1usize << k;
    let mut dp = vec![f64::NEG_INFINITY; full];
    let mut choice = vec![usize::MAX; full];
    dp[0] = 0.0;
    for mask in 0..full {
        if dp[mask] == f64::NEG_INFINITY {
            continue;
        }
        let p = mask.count_ones() as usize;
        if p == k {
            continue;
        }
        for t in 0..k {
            if mask >> t & 1 == 1 {
                continue;
            }
            let next = mask | 1 << t;
            let v = dp[mask] + conf[p][t];
            if v > dp[next] {
                dp[next] = v;
                choice[next] = t;
            }
        }
    }
    let mut mapping = vec![0; k];
    let mut mask = full - 1;
    for p in (0..k).rev() {
        let t = choice[mask];
        mapping[p] = t;
        mask &= !(1 << t);
    }
    mapping
}

/// Maximum-weight perfect matching on a square matrix (Hungarian method on
/// the negated weights). Returns `mapping[row] = col`.
fn hungarian_max(conf: &[Vec<f64>]) -> Vec<usize> {
    let n = conf.len();
    let cost = |i: usize, j: usize| -conf[i - 1][j - 1];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut way = vec![0usize; n + 1];
    // p[j] = row matched to column j (1-based, 0 = none)
    let mut p = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut mapping = vec![0; n];
    for j in 1..=n {
        mapping[p[j] - 1] = j - 1;
    }
    mapping
}

/// `Omega` against `K` and the chosen elbow.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KSelection<T> {
    pub k: usize,
    /// `(K, Omega)` for every `K` tried.
    pub curve: Vec<(usize, T)>,
    /// `(K, Omega(K-1) - 2 Omega(K) + Omega(K+1))` for interior `K`.
    pub second_differences: Vec<(usize, T)>,
    /// False when `Omega` rose somewhere along the curve.
    pub monotone: bool,
}

/// Picks the interior `K` with the largest second difference of a
/// `(K, Omega)` curve; the smallest such `K` on ties.
pub fn select_k_second_difference<T: Scalar>(curve: &[(usize, T)]) -> Result<KSelection<T>> {
    if curve.len() < 3 {
        return Err(NuggetError::param("need Omega at three or more consecutive K"));
    }
    if curve.windows(2).any(|w| w[1].0 != w[0].0 + 1) {
        return Err(NuggetError::param("K values must be consecutive and ascending"));
    }
    let second: Vec<(usize, T)> = curve.windows(3).map(|w| (w[1].0, w[0].1 - w[1].1 - w[1].1 + w[2].1)).collect();
    let mut best = second[0];
    for &s in &second[1..] {
        if cmp_finite(&s.1, &best.1).is_gt() {
            best = s;
        }
    }
    let monotone = curve.windows(2).all(|w| w[1].1 <= w[0].1);
    Ok(KSelection { k: best.0, curve: curve.to_vec(), second_differences: second, monotone })
}

/// Runs weighted K-means for every `K` in `k_min..=k_max` and selects `K` by
/// the second difference of the `Omega` curve. `params.k` is ignored.
pub fn choose_k<T: Scalar>(nuggets: &NuggetSet<T>, k_min: usize, k_max: usize, params: &WKMeansParams) -> Result<KSelection<T>> {
    choose_k_points(&nuggets.centers()?, &nuggets.weights(), k_min, k_max, params)
}

/// [`choose_k`] over arbitrary weighted points.
pub fn choose_k_points<T: Scalar>(
    points: &DataMatrix<T>,
    weights: &[T],
    k_min: usize,
    k_max: usize,
    params: &WKMeansParams,
) -> Result<KSelection<T>> {
    if k_min < 2 {
        return Err(NuggetError::param("k_min must be at least 2"));
    }
    if k_max < k_min + 2 {
        return Err(NuggetError::param("k_max - k_min must be at least 2"));
    }
    if k_max + 1 > points.nrows() {
        return Err(NuggetError::param(format!("k_max = {k_max} must be below the {} points", points.nrows())));
    }
    let mut curve = Vec::new();
    for k in k_min..=k_max {
        let p = WKMeansParams { k, ..params.clone() };
        curve.push((k, weighted_kmeans_points(points, weights, &p)?.wwcss));
    }
    select_k_second_difference(&curve)
}
