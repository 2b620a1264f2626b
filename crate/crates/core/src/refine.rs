//! Refinement: split nuggets whose within-nugget spread is large relative to
//! the rest.
//!
//! Each round computes `zeta_j`, the largest eigenvalue of nugget `j`'s member
//! covariance (its scale when `P = 1`), takes `eta` as the `nu` quantile of
//! the nonzero `zeta` values, and tries to split every nugget with
//! `zeta_j > eta` in two by 2-means. A split is kept only if both children
//! have at least `n_min` members; nuggets with at most `2 n_min` members are
//! never split. Rounds repeat until no candidate remains, a round removes
//! no candidate, or `max_rounds` is reached.

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NuggetError, Result};
use crate::linalg::{covariance_of_rows, largest_symmetric_eigenvalue};
use crate::matrix::DataMatrix;
use crate::metric::DistanceMetric;
use crate::nugget::NuggetSet;
use crate::reduce::summarize;
use crate::rng::SeedStream;
use crate::scalar::{cmp_finite, Scalar};
use crate::wstats::quantile_type7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineParams {
    /// Quantile level `nu` in (0, 1) of the splitting threshold.
    pub nu: f64,
    /// Minimum members per child nugget.
    pub n_min: usize,
    pub max_rounds: usize,
    pub seed: u64,
}

impl RefineParams {
    pub const DEFAULT_N_MIN: usize = 2;
    pub const DEFAULT_MAX_ROUNDS: usize = 50;

    pub fn new(nu: f64) -> Self {
        Self { nu, n_min: Self::DEFAULT_N_MIN, max_rounds: Self::DEFAULT_MAX_ROUNDS, seed: 0 }
    }

    pub fn with_n_min(mut self, n_min: usize) -> Self {
        self.n_min = n_min;
        self
    }

    pub fn with_max_rounds(mut self, rounds: usize) -> Self {
        self.max_rounds = rounds;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu < 1.0) {
            return Err(NuggetError::param(format!("nu must lie in (0, 1), got {}", self.nu)));
        }
        if self.n_min < 1 {
            return Err(NuggetError::param("n_min must be at least 1"));
        }
        if self.max_rounds < 1 {
            return Err(NuggetError::param("max_rounds must be at least 1"));
        }
        Ok(())
    }
}

/// Nuggets whose `zeta` exceeded the round's threshold, largest first.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SplitCandidateList<T> {
    pub round: usize,
    pub eta: T,
    pub nuggets: Vec<usize>,
    pub zetas: Vec<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RefineRound<T> {
    pub candidates: SplitCandidateList<T>,
    pub splits: usize,
    /// Candidates whose split produced a child below `n_min`.
    pub reverted: Vec<usize>,
    /// Candidates with at most `2 n_min` members, or no usable partition.
    pub unsplittable: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Every `zeta` is zero, so there is no threshold to compute.
    NoSpread,
    NoCandidates,
    NoRemoval,
    MaxRounds,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RefineReport<T> {
    pub rounds: Vec<RefineRound<T>>,
    pub termination: Termination,
    /// `zeta` of every output nugget.
    pub zetas: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct Refinement<T> {
    pub set: NuggetSet<T>,
    pub report: RefineReport<T>,
}

/// Largest eigenvalue of the sample covariance of `members`; zero with
/// fewer than two rows. For a single column this is the sample variance,
/// which is the nugget scale.
pub fn largest_eigenvalue<T: Scalar>(members: &DataMatrix<T>) -> T {
    let rows: Vec<usize> = (0..members.nrows()).collect();
    zeta_of(members, &rows)
}

fn zeta_of<T: Scalar>(x: &DataMatrix<T>, rows: &[usize]) -> T {
    if rows.len() < 2 {
        return T::zero();
    }
    let (_, cov) = covariance_of_rows(x, rows);
    largest_symmetric_eigenvalue(&cov).max(T::zero())
}

const SPLIT_RESTARTS: u64 = 5;
const SPLIT_SUBSAMPLE: usize = 32;
const SPLIT_MAX_ITER: usize = 100;

/// Splits `members` in two by unweighted Euclidean 2-means. Returns member
/// row positions of both children, or `None` when the rows number at most
/// `2 n_min` or admit no partition with two nonempty children.
pub fn split_nugget<T: Scalar>(members: &DataMatrix<T>, n_min: usize, seed: u64) -> Option<(Vec<usize>, Vec<usize>)> {
    let rows: Vec<usize> = (0..members.nrows()).collect();
    if rows.len() <= 2 * n_min {
        return None;
    }
    two_means(members, &rows, SeedStream::new(seed).child("split"))
}

/// Best of several seeded 2-means runs over `rows`. Each run starts from the
/// farthest pair within a small random subsample.
fn two_means<T: Scalar>(x: &DataMatrix<T>, rows: &[usize], stream: SeedStream) -> Option<(Vec<usize>, Vec<usize>)> {
    let n = rows.len();
    if n < 2 {
        return None;
    }
    let metric = DistanceMetric::Euclidean;
    let p = x.ncols();
    let mut best: Option<(T, Vec<bool>)> = None;
    for restart in 0..SPLIT_RESTARTS {
        let mut rng = stream.index(restart).rng();
        let mut sub: Vec<usize> = sample(&mut rng, n, SPLIT_SUBSAMPLE.min(n)).into_vec();
        sub.sort_unstable();
        let mut far = (T::zero(), 0, 0);
        for (ai, &a) in sub.iter().enumerate() {
            for &b in &sub[ai + 1..] {
                let key = metric.key(x.row(rows[a]), x.row(rows[b]));
                if key > far.0 {
                    far = (key, a, b);
                }
            }
        }
        if far.0 == T::zero() {
            continue;
        }
        let mut centers = [x.row(rows[far.1]).to_vec(), x.row(rows[far.2]).to_vec()];
        let mut labels = vec![false; n];
        for iter in 0..SPLIT_MAX_ITER {
            let mut changed = iter == 0;
            for (l, &r) in labels.iter_mut().zip(rows) {
                let row = x.row(r);
                let second = metric.key(row, &centers[1]) < metric.key(row, &centers[0]);
                if second != *l {
                    *l = second;
                    changed = true;
                }
            }
            let mut sums = [vec![T::zero(); p], vec![T::zero(); p]];
            let mut counts = [0usize; 2];
            for (&l, &r) in labels.iter().zip(rows) {
                let c = usize::from(l);
                counts[c] += 1;
                for (s, &v) in sums[c].iter_mut().zip(x.row(r)) {
                    *s += v;
                }
            }
            if counts[0] == 0 || counts[1] == 0 {
                break;
            }
            for c in 0..2 {
                let cnt = T::from_count(counts[c]);
                centers[c] = sums[c].iter().map(|&s| s / cnt).collect();
            }
            if !changed {
                break;
            }
        }
        let ones = labels.iter().filter(|&&l| l).count();
        if ones == 0 || ones == n {
            continue;
        }
        let ss: T = labels.iter().zip(rows).map(|(&l, &r)| metric.key(x.row(r), &centers[usize::from(l)])).sum();
        if best.as_ref().is_none_or(|(b, _)| ss < *b) {
            best = Some((ss, labels));
        }
    }
    let (_, labels) = best?;
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        if l == labels[0] {
            a.push(i);
        } else {
            b.push(i);
        }
    }
    Some((a, b))
}

/// Refines a nugget set built from `x`. Children replace their parent: the
/// child holding the parent's lowest-indexed row takes the parent's slot
/// and the other child is appended.
pub fn refine_data_nuggets<T: Scalar>(x: &DataMatrix<T>, set: &NuggetSet<T>, params: &RefineParams) -> Result<Refinement<T>> {
    params.validate()?;
    if set.assignment.len() != x.nrows() {
        return Err(NuggetError::DimensionMismatch { expected: x.nrows(), found: set.assignment.len() });
    }
    let mut members = set.members();
    if let Some(j) = members.iter().position(Vec::is_empty) {
        return Err(NuggetError::EmptyNugget(j));
    }
    let mut nuggets = set.nuggets.clone();
    let mut zeta: Vec<T> = members.par_iter().map(|m| zeta_of(x, m)).collect();
    let root = SeedStream::new(params.seed);
    let mut rounds = Vec::new();
    let mut termination = Termination::MaxRounds;

    for round in 0..params.max_rounds {
        let nonzero: Vec<T> = zeta.iter().copied().filter(|&z| z > T::zero()).collect();
        if nonzero.is_empty() {
            termination = Termination::NoSpread;
            break;
        }
        let eta = quantile_type7(&nonzero, T::lit(params.nu));
        let mut cand: Vec<usize> = (0..nuggets.len()).filter(|&j| zeta[j] > eta).collect();
        cand.sort_by(|&a, &b| cmp_finite(&zeta[b], &zeta[a]).then(a.cmp(&b)));
        let candidates = SplitCandidateList { round, eta, zetas: cand.iter().map(|&j| zeta[j]).collect(), nuggets: cand.clone() };
        if cand.is_empty() {
            rounds.push(RefineRound { candidates, splits: 0, reverted: Vec::new(), unsplittable: Vec::new() });
            termination = Termination::NoCandidates;
            break;
        }

        let stream = root.child("round").index(round as u64);
        let attempts: Vec<Option<(Vec<usize>, Vec<usize>)>> = cand
            .par_iter()
            .map(|&j| {
                if members[j].len() <= 2 * params.n_min {
                    return None;
                }
                let (a, b) = two_means(x, &members[j], stream.index(j as u64))?;
                let to_rows = |v: Vec<usize>| v.into_iter().map(|i| members[j][i]).collect::<Vec<_>>();
                Some((to_rows(a), to_rows(b)))
            })
            .collect();

        let mut splits = 0;
        let mut reverted = Vec::new();
        let mut unsplittable = Vec::new();
        for (&j, attempt) in cand.iter().zip(attempts) {
            let Some((a, b)) = attempt else {
                unsplittable.push(j);
                continue;
            };
            if a.len() < params.n_min || b.len() < params.n_min {
                reverted.push(j);
                continue;
            }
            let child_stream = root.child("recenter").index(round as u64);
            let new_id = nuggets.len();
            nuggets[j] = summarize(x, &a, set.center_mode, child_stream.index(j as u64));
            nuggets.push(summarize(x, &b, set.center_mode, child_stream.index(new_id as u64)));
            zeta[j] = zeta_of(x, &a);
            zeta.push(zeta_of(x, &b));
            members[j] = a;
            members.push(b);
            splits += 1;
        }
        rounds.push(RefineRound { candidates, splits, reverted, unsplittable });
        if splits == 0 {
            termination = Termination::NoRemoval;
            break;
        }
    }

    let mut assignment = vec![0usize; x.nrows()];
    for (j, mem) in members.iter().enumerate() {
        for &i in mem {
            assignment[i] = j;
        }
    }
    let out = NuggetSet {
        nuggets,
        assignment,
        center_mode: set.center_mode,
        params: set.params.clone(),
        stats: set.stats.clone(),
    };
    Ok(Refinement { set: out, report: RefineReport { rounds, termination, zetas: zeta } })
}

impl<T: Scalar> RefineReport<T> {
    /// Checks that every output nugget has `zeta` at most the last round's
    /// threshold, has at most `2 n_min` members, or was reverted in the last
    /// round. Runs stopped by `max_rounds` are not held to this.
    pub fn audit(&self, set: &NuggetSet<T>, n_min: usize) -> std::result::Result<(), String> {
        if self.termination == Termination::MaxRounds || self.termination == Termination::NoSpread {
            return Ok(());
        }
        let Some(last) = self.rounds.last() else {
            return Ok(());
        };
        let eta = last.candidates.eta;
        for (j, nug) in set.nuggets.iter().enumerate() {
            let ok = self.zetas[j] <= eta
                || nug.weight as usize <= 2 * n_min
                || last.reverted.contains(&j)
                || last.unsplittable.contains(&j);
            if !ok {
                return Err(format!("nugget {j}: zeta {} > eta {eta} with {} members", self.zetas[j], nug.weight));
            }
        }
        Ok(())
    }
}
