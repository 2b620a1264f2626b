//! Nugget creation: pick well-spread observations as centers by repeatedly
//! deleting one member of each of the currently closest pairs, then assign
//! every observation to its nearest center and summarise each group.
//!
//! The deletion runs in two stages. The rows are first split at random into
//! `G = ceil(N / R)` subsets that are reduced independently to
//! `ceil(M_init / G)` rows each; the survivors are concatenated and reduced
//! once more to exactly `M` rows.
//!
//! Within one deletion round on `n` rows, the `max(1, floor(C n))` closest
//! pairs are visited in `(distance, first, second)` order. For each pair the
//! member at the later position is deleted, unless one of the two was
//! already deleted this round, in which case the pair is skipped. The round
//! stops early once the target row count is reached.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{NuggetError, Result};
use crate::linalg::covariance_of_rows;
use crate::matrix::DataMatrix;
use crate::metric::DistanceMetric;
use crate::nugget::{members_of, CenterMode, DataNugget, DistanceEvals, NuggetSet, ReductionParams, ReductionStats};
use crate::pairs::{closest_pairs, PairSearch};
use crate::rng::SeedStream;
use crate::scalar::Scalar;

/// Record of a single deletion round.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeletionRound<T> {
    pub subset_id: usize,
    /// `(row, col, distance)` of every pair examined, closest first. Indices
    /// refer to rows of the matrix being reduced.
    pub pairs_considered: Vec<(usize, usize, T)>,
    /// Rows deleted this round.
    pub deleted: Vec<usize>,
}

/// Result of [`reduce_submatrix`].
#[derive(Clone, Debug)]
pub struct SubmatrixReduction<T> {
    /// Surviving row indices, in their original order.
    pub kept: Vec<usize>,
    pub reduced: DataMatrix<T>,
    pub rounds: Vec<DeletionRound<T>>,
    pub distance_evals: u64,
}

/// Reduces `x_g` to exactly `target` rows by closest-pair deletion.
pub fn reduce_submatrix<T: Scalar>(
    x_g: &DataMatrix<T>,
    target: usize,
    c: f64,
    metric: DistanceMetric,
) -> Result<SubmatrixReduction<T>> {
    reduce_submatrix_with(x_g, target, c, metric, PairSearch::Auto)
}

/// [`reduce_submatrix`] with an explicit pair-search strategy.
pub fn reduce_submatrix_with<T: Scalar>(
    x_g: &DataMatrix<T>,
    target: usize,
    c: f64,
    metric: DistanceMetric,
    search: PairSearch,
) -> Result<SubmatrixReduction<T>> {
    if target < 1 {
        return Err(NuggetError::param("reduction target must be at least 1"));
    }
    if target > x_g.nrows() {
        return Err(NuggetError::param(format!("target {target} exceeds {} rows", x_g.nrows())));
    }
    if !(c > 0.0 && c < 1.0) {
        return Err(NuggetError::param(format!("deletion rate must lie in (0, 1), got {c}")));
    }
    let rows: Vec<usize> = (0..x_g.nrows()).collect();
    let out = reduce_rows(x_g, &rows, target, c, metric, search, 0, true);
    let reduced = x_g.select_rows(&out.kept)?;
    Ok(SubmatrixReduction { kept: out.kept, reduced, rounds: out.rounds, distance_evals: out.evals })
}

pub(crate) struct RowReduction<T> {
    pub kept: Vec<usize>,
    pub rounds: Vec<DeletionRound<T>>,
    /// Number of deletion rounds executed.
    pub iterations: usize,
    pub evals: u64,
}

/// Deletes rows of `x` listed in `rows` until `target` remain. Position in
/// `rows` decides which pair member goes.
#[allow(clippy::too_many_arguments)]
pub(crate) fn reduce_rows<T: Scalar>(
    x: &DataMatrix<T>,
    rows: &[usize],
    target: usize,
    c: f64,
    metric: DistanceMetric,
    search: PairSearch,
    subset_id: usize,
    record: bool,
) -> RowReduction<T> {
    let mut live: Vec<usize> = rows.to_vec();
    let mut rounds = Vec::new();
    let mut iterations = 0;
    let mut evals = 0u64;
    while live.len() > target {
        let n = live.len();
        let k = ((c * n as f64).floor() as usize).clamp(1, n - 1);
        let (pairs, e) = closest_pairs(x, &live, k, metric, search);
        evals += e;
        let needed = n - target;
        let mut dead = vec![false; n];
        let mut deleted = Vec::new();
        for pr in &pairs {
            if deleted.len() == needed {
                break;
            }
            if dead[pr.a] || dead[pr.b] {
                continue;
            }
            dead[pr.b] = true;
            deleted.push(pr.b);
        }
        if record {
            rounds.push(DeletionRound {
                subset_id,
                pairs_considered: pairs.iter().map(|p| (live[p.a], live[p.b], metric.from_key(p.key))).collect(),
                deleted: deleted.iter().map(|&p| live[p]).collect(),
            });
        }
        live = live.iter().zip(&dead).filter(|(_, &d)| !d).map(|(&r, _)| r).collect();
        iterations += 1;
    }
    RowReduction { kept: live, rounds, iterations, evals }
}

/// Centers chosen by the two deletion stages.
#[derive(Clone, Debug)]
pub struct InitialCenters<T> {
    /// Row indices of `X` that became centers, in final order.
    pub rows: Vec<usize>,
    pub centers: DataMatrix<T>,
    pub stats: ReductionStats,
}

/// Random split, per-subset reduction to `ceil(M_init / G)` rows,
/// concatenation and second-stage reduction to exactly `M` rows.
pub fn select_initial_centers<T: Scalar>(x: &DataMatrix<T>, params: &ReductionParams) -> Result<InitialCenters<T>> {
    let n = x.nrows();
    params.validate(n)?;
    let mut stats = ReductionStats::default();
    if params.m == n {
        let rows: Vec<usize> = (0..n).collect();
        return Ok(InitialCenters { centers: x.clone(), rows, stats });
    }

    let g = params.subsets(n);
    stats.subsets = g;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut SeedStream::new(params.seed).child("split").rng());
    let subsets = balanced_chunks(&order, g);
    let per_subset = params.m_init.div_ceil(g);

    let reduced: Vec<RowReduction<T>> = subsets
        .par_iter()
        .enumerate()
        .map(|(gi, rows)| {
            if rows.len() > per_subset {
                reduce_rows(x, rows, per_subset, params.deletion_rate, params.metric, params.pair_search, gi, false)
            } else {
                RowReduction { kept: rows.to_vec(), rounds: Vec::new(), iterations: 0, evals: 0 }
            }
        })
        .collect();

    let mut intermediate = Vec::with_capacity(per_subset * g);
    for r in &reduced {
        stats.psi1_per_subset.push(if r.iterations > 0 { r.iterations + 1 } else { 0 });
        stats.distance_evals.reduction += r.evals;
        intermediate.extend_from_slice(&r.kept);
    }
    stats.intermediate_centers = intermediate.len();
    if intermediate.len() < params.m {
        return Err(NuggetError::param(format!(
            "only {} intermediate centers for M = {}",
            intermediate.len(),
            params.m
        )));
    }

    let second = reduce_rows(x, &intermediate, params.m, params.deletion_rate, params.metric, params.pair_search, g, false);
    stats.psi2 = if second.iterations > 0 { second.iterations + 1 } else { 0 };
    stats.distance_evals.reduction += second.evals;
    let centers = x.select_rows(&second.kept)?;
    Ok(InitialCenters { rows: second.kept, centers, stats })
}

/// Splits `items` into `g` consecutive chunks whose sizes differ by at most one.
fn balanced_chunks(items: &[usize], g: usize) -> Vec<Vec<usize>> {
    let n = items.len();
    let (base, extra) = (n / g, n % g);
    let mut out = Vec::with_capacity(g);
    let mut start = 0;
    for i in 0..g {
        let len = base + usize::from(i < extra);
        out.push(items[start..start + len].to_vec());
        start += len;
    }
    out
}

/// Nearest-center assignment of every observation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Assignment {
    pub labels: Vec<usize>,
    /// Exactly `N * M`.
    pub distance_evals: u64,
}

/// Maps each row of `x` to its nearest center; ties go to the lower index.
pub fn assign_all<T: Scalar>(x: &DataMatrix<T>, centers: &DataMatrix<T>, metric: DistanceMetric) -> Result<Assignment> {
    if centers.ncols() != x.ncols() {
        return Err(NuggetError::DimensionMismatch { expected: x.ncols(), found: centers.ncols() });
    }
    const CHUNK: usize = 1024;
    let labels: Vec<usize> = x
        .as_slice()
        .par_chunks(CHUNK * x.ncols())
        .flat_map_iter(|block| {
            block.chunks_exact(x.ncols()).map(|row| {
                let mut best = 0;
                let mut best_key = T::infinity();
                for (j, c) in centers.rows().enumerate() {
                    let key = metric.key(row, c);
                    if key < best_key {
                        best_key = key;
                        best = j;
                    }
                }
                best
            })
        })
        .collect();
    let distance_evals = (x.nrows() as u64) * (centers.nrows() as u64);
    Ok(Assignment { labels, distance_evals })
}

/// Summarises each group of the assignment as a nugget: center (member mean
/// or a random member), weight (member count) and scale (trace of the
/// member covariance over `P`, zero for singletons).
pub fn build_nuggets<T: Scalar>(
    x: &DataMatrix<T>,
    assignment: &[usize],
    m: usize,
    center_mode: CenterMode,
    seed: u64,
) -> Result<NuggetSet<T>> {
    if assignment.len() != x.nrows() {
        return Err(NuggetError::DimensionMismatch { expected: x.nrows(), found: assignment.len() });
    }
    if let Some(&bad) = assignment.iter().find(|&&j| j >= m) {
        return Err(NuggetError::param(format!("assignment refers to nugget {bad} but only {m} exist")));
    }
    let members = members_of(assignment, m);
    if let Some(j) = members.iter().position(Vec::is_empty) {
        return Err(NuggetError::EmptyNugget(j));
    }
    let stream = SeedStream::new(seed).child("recenter");
    let nuggets = members
        .par_iter()
        .enumerate()
        .map(|(j, mem)| summarize(x, mem, center_mode, stream.index(j as u64)))
        .collect();
    Ok(NuggetSet { nuggets, assignment: assignment.to_vec(), center_mode, params: None, stats: ReductionStats::default() })
}

pub(crate) fn summarize<T: Scalar>(x: &DataMatrix<T>, members: &[usize], mode: CenterMode, stream: SeedStream) -> DataNugget<T> {
    let (mean, cov) = covariance_of_rows(x, members);
    let scale = if members.len() > 1 { cov.trace() / T::from_count(x.ncols()) } else { T::zero() };
    let center = match mode {
        CenterMode::Mean => mean,
        CenterMode::Random => {
            let pick = stream.rng().random_range(0..members.len());
            x.row(members[pick]).to_vec()
        }
    };
    DataNugget { center, weight: members.len() as u64, scale }
}

/// Full nugget creation: center selection, assignment, summarisation.
pub fn create_data_nuggets<T: Scalar>(x: &DataMatrix<T>, params: &ReductionParams) -> Result<NuggetSet<T>> {
    let started = Instant::now();
    let init = select_initial_centers(x, params)?;
    let assignment = assign_all(x, &init.centers, params.metric)?;
    let mut set = build_nuggets(x, &assignment.labels, init.centers.nrows(), params.center_mode, params.seed)?;
    set.params = Some(params.clone());
    set.stats = ReductionStats {
        distance_evals: DistanceEvals { assignment: assignment.distance_evals, ..init.stats.distance_evals },
        wall_time: started.elapsed().as_secs_f64(),
        ..init.stats
    };
    Ok(set)
}
