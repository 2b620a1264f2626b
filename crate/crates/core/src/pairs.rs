//! Exact search for the `k` closest pairs among a set of rows.
//!
//! Pairs are ranked by `(distance, first position, second position)`, so the
//! result is a deterministic function of the input regardless of strategy or
//! thread count. Two strategies are provided: a single-pass scan with a
//! bounded heap, and a kd-tree that bounds the `k`-th pair distance from
//! nearest neighbours and then collects every pair inside that radius.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::matrix::DataMatrix;
use crate::metric::DistanceMetric;
use crate::scalar::{cmp_finite, Scalar};

/// How the closest pairs of a round are found. All strategies return the
/// same pairs; they differ only in cost.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairSearch {
    /// kd-tree in low dimension, brute force otherwise.
    #[default]
    Auto,
    Brute,
    KdTree,
}

/// Largest dimension for which `Auto` picks the kd-tree.
const KD_MAX_DIM: usize = 8;
const KD_MIN_ROWS: usize = 64;
const LEAF: usize = 8;

/// One candidate pair; `a < b` are positions into the row list.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClosePair<T> {
    pub key: T,
    pub a: usize,
    pub b: usize,
}

impl<T: Scalar> ClosePair<T> {
    #[inline]
    fn order(&self, other: &Self) -> Ordering {
        cmp_finite(&self.key, &other.key).then(self.a.cmp(&other.a)).then(self.b.cmp(&other.b))
    }
}

struct HeapItem<T>(ClosePair<T>);

impl<T: Scalar> PartialEq for HeapItem<T> {
    fn eq(&self, other: &Self) -> bool {
        self.0.order(&other.0) == Ordering::Equal
    }
}
impl<T: Scalar> Eq for HeapItem<T> {}
impl<T: Scalar> PartialOrd for HeapItem<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Scalar> Ord for HeapItem<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.order(&other.0)
    }
}

/// The `k` smallest pairs among `rows` (indices into `x`), sorted. Also
/// returns the number of distance evaluations spent.
pub fn closest_pairs<T: Scalar>(
    x: &DataMatrix<T>,
    rows: &[usize],
    k: usize,
    metric: DistanceMetric,
    search: PairSearch,
) -> (Vec<ClosePair<T>>, u64) {
    let n = rows.len();
    if n < 2 || k == 0 {
        return (Vec::new(), 0);
    }
    let use_tree = match search {
        PairSearch::Brute => false,
        PairSearch::KdTree => true,
        PairSearch::Auto => x.ncols() <= KD_MAX_DIM && n >= KD_MIN_ROWS,
    };
    if use_tree {
        kd_closest_pairs(x, rows, k, metric)
    } else {
        brute_closest_pairs(x, rows, k, metric)
    }
}

fn brute_closest_pairs<T: Scalar>(x: &DataMatrix<T>, rows: &[usize], k: usize, metric: DistanceMetric) -> (Vec<ClosePair<T>>, u64) {
    let n = rows.len();
    // Interleave first positions across chunks so each chunk gets a similar
    // share of the triangular workload.
    let chunks = rayon::current_num_threads().max(1) * 4;
    let partials: Vec<(Vec<ClosePair<T>>, u64)> = (0..chunks.min(n))
        .into_par_iter()
        .map(|c| {
            let mut heap: BinaryHeap<HeapItem<T>> = BinaryHeap::with_capacity(k + 1);
            let mut evals = 0u64;
            let mut a = c;
            while a < n {
                let ra = x.row(rows[a]);
                for b in a + 1..n {
                    let key = metric.key(ra, x.row(rows[b]));
                    evals += 1;
                    let cand = ClosePair { key, a, b };
                    if heap.len() < k {
                        heap.push(HeapItem(cand));
                    } else if cand.order(&heap.peek().expect("non-empty heap").0) == Ordering::Less {
                        heap.pop();
                        heap.push(HeapItem(cand));
                    }
                }
                a += chunks;
            }
            (heap.into_iter().map(|h| h.0).collect(), evals)
        })
        .collect();
    let evals = partials.iter().map(|p| p.1).sum();
    let mut all: Vec<ClosePair<T>> = partials.into_iter().flat_map(|p| p.0).collect();
    all.sort_by(|p, q| p.order(q));
    all.truncate(k);
    (all, evals)
}

struct KdNode<T> {
    lo: Vec<T>,
    hi: Vec<T>,
    start: usize,
    end: usize,
    children: Option<(usize, usize)>,
}

/// kd-tree over positions `0..rows.len()`.
struct KdTree<'a, T> {
    x: &'a DataMatrix<T>,
    rows: &'a [usize],
    perm: Vec<usize>,
    nodes: Vec<KdNode<T>>,
    metric: DistanceMetric,
}

impl<'a, T: Scalar> KdTree<'a, T> {
    fn build(x: &'a DataMatrix<T>, rows: &'a [usize], metric: DistanceMetric) -> Self {
        let mut tree = KdTree { x, rows, perm: (0..rows.len()).collect(), nodes: Vec::new(), metric };
        tree.build_node(0, rows.len());
        tree
    }

    #[inline]
    fn point(&self, pos: usize) -> &[T] {
        self.x.row(self.rows[pos])
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let p = self.x.ncols();
        let mut lo = vec![T::infinity(); p];
        let mut hi = vec![T::neg_infinity(); p];
        for &pos in &self.perm[start..end] {
            for (d, &v) in self.x.row(self.rows[pos]).iter().enumerate() {
                lo[d] = lo[d].min(v);
                hi[d] = hi[d].max(v);
            }
        }
        let id = self.nodes.len();
        let spread_dim = (0..p).max_by(|&a, &b| cmp_finite(&(hi[a] - lo[a]), &(hi[b] - lo[b]))).unwrap_or(0);
        let flat = hi[spread_dim] - lo[spread_dim] == T::zero();
        self.nodes.push(KdNode { lo, hi, start, end, children: None });
        if end - start <= LEAF || flat {
            return id;
        }
        let mid = start + (end - start) / 2;
        {
            let (x, rows) = (self.x, self.rows);
            self.perm[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
                cmp_finite(&x.row(rows[a])[spread_dim], &x.row(rows[b])[spread_dim]).then(a.cmp(&b))
            });
        }
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id].children = Some((left, right));
        id
    }

    #[inline]
    fn box_key(&self, node: usize, q: &[T]) -> T {
        let n = &self.nodes[node];
        let mut acc = T::zero();
        for ((&v, &lo), &hi) in q.iter().zip(&n.lo).zip(&n.hi) {
            let gap = if v < lo {
                lo - v
            } else if v > hi {
                v - hi
            } else {
                continue;
            };
            acc += self.metric.axis_key(gap);
        }
        acc
    }

    /// The `t` nearest other positions of `pos` as `(key, other)`.
    fn nearest(&self, pos: usize, t: usize, evals: &mut u64) -> Vec<(T, usize)> {
        let q = self.point(pos);
        let mut best: Vec<(T, usize)> = Vec::with_capacity(t + 1);
        self.nearest_rec(0, pos, q, t, &mut best, evals);
        best
    }

    fn nearest_rec(&self, node: usize, pos: usize, q: &[T], t: usize, best: &mut Vec<(T, usize)>, evals: &mut u64) {
        let worst = |best: &Vec<(T, usize)>| if best.len() < t { T::infinity() } else { best[best.len() - 1].0 };
        if self.box_key(node, q) > worst(best) {
            return;
        }
        let n = &self.nodes[node];
        match n.children {
            None => {
                for &other in &self.perm[n.start..n.end] {
                    if other == pos {
                        continue;
                    }
                    let key = self.metric.key(q, self.point(other));
                    *evals += 1;
                    if best.len() < t || (key, other) < (best[best.len() - 1].0, best[best.len() - 1].1) {
                        let at = best.partition_point(|&(k, o)| (k, o) < (key, other));
                        best.insert(at, (key, other));
                        best.truncate(t);
                    }
                }
            }
            Some((l, r)) => {
                let (first, second) = if self.box_key(l, q) <= self.box_key(r, q) { (l, r) } else { (r, l) };
                self.nearest_rec(first, pos, q, t, best, evals);
                self.nearest_rec(second, pos, q, t, best, evals);
            }
        }
    }

    /// Every `b > pos` with `key(pos, b) <= radius`.
    fn within(&self, pos: usize, radius: T, out: &mut Vec<ClosePair<T>>, evals: &mut u64) {
        let q = self.point(pos);
        let mut stack = vec![0usize];
        while let Some(node) = stack.pop() {
            if self.box_key(node, q) > radius {
                continue;
            }
            let n = &self.nodes[node];
            match n.children {
                None => {
                    for &other in &self.perm[n.start..n.end] {
                        if other <= pos {
                            continue;
                        }
                        let key = self.metric.key(q, self.point(other));
                        *evals += 1;
                        if key <= radius {
                            out.push(ClosePair { key, a: pos, b: other });
                        }
                    }
                }
                Some((l, r)) => {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
    }
}

fn kd_closest_pairs<T: Scalar>(x: &DataMatrix<T>, rows: &[usize], k: usize, metric: DistanceMetric) -> (Vec<ClosePair<T>>, u64) {
    let n = rows.len();
    let tree = KdTree::build(x, rows, metric);
    // With two neighbours per point there are at least n distinct pairs,
    // which is more than the k < n needed to bound the k-th distance.
    let t = 2.min(n - 1);
    let knn: Vec<(Vec<(T, usize)>, u64)> = (0..n)
        .into_par_iter()
        .map(|pos| {
            let mut evals = 0;
            (tree.nearest(pos, t, &mut evals), evals)
        })
        .collect();
    let mut evals: u64 = knn.iter().map(|r| r.1).sum();
    let mut seen = HashSet::with_capacity(n * t);
    let mut cands: Vec<ClosePair<T>> = Vec::with_capacity(n * t);
    for (pos, (nn, _)) in knn.iter().enumerate() {
        for &(key, other) in nn {
            let (a, b) = if pos < other { (pos, other) } else { (other, pos) };
            if seen.insert((a, b)) {
                cands.push(ClosePair { key, a, b });
            }
        }
    }
    if cands.len() < k {
        let (pairs, e) = brute_closest_pairs(x, rows, k, metric);
        return (pairs, evals + e);
    }
    cands.select_nth_unstable_by(k - 1, |p, q| p.order(q));
    let radius = cands[k - 1].key;

    let found: Vec<(Vec<ClosePair<T>>, u64)> = (0..n)
        .into_par_iter()
        .map(|pos| {
            let mut out = Vec::new();
            let mut e = 0;
            tree.within(pos, radius, &mut out, &mut e);
            (out, e)
        })
        .collect();
    evals += found.iter().map(|r| r.1).sum::<u64>();
    let mut all: Vec<ClosePair<T>> = found.into_iter().flat_map(|r| r.0).collect();
    all.sort_by(|p, q| p.order(q));
    all.truncate(k);
    (all, evals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    use crate::rng::SeedStream;

    /// Enumerate and sort every pair.
    fn oracle(x: &DataMatrix<f64>, rows: &[usize], k: usize) -> Vec<(f64, usize, usize)> {
        let m = DistanceMetric::Euclidean;
        let mut all = Vec::new();
        for a in 0..rows.len() {
            for b in a + 1..rows.len() {
                all.push((m.key(x.row(rows[a]), x.row(rows[b])), a, b));
            }
        }
        all.sort_by(|p, q| p.partial_cmp(q).unwrap());
        all.truncate(k);
        all
    }

    fn flat(p: &[ClosePair<f64>]) -> Vec<(f64, usize, usize)> {
        p.iter().map(|c| (c.key, c.a, c.b)).collect()
    }

    #[test]
    fn strategies_agree_with_enumeration() {
        for (seed, p, n, k) in [(1u64, 1usize, 300usize, 30usize), (2, 2, 500, 100), (3, 3, 200, 7), (4, 6, 257, 60)] {
            let mut rng = SeedStream::new(seed).rng();
            let vals: Vec<f64> = (0..n * p).map(|_| rng.random_range(-3.0..3.0)).collect();
            let x = DataMatrix::new(n, p, vals).unwrap();
            let rows: Vec<usize> = (0..n).rev().step_by(1).collect();
            let want = oracle(&x, &rows, k);
            for s in [PairSearch::Brute, PairSearch::KdTree, PairSearch::Auto] {
                let (got, _) = closest_pairs(&x, &rows, k, DistanceMetric::Euclidean, s);
                assert_eq!(flat(&got), want, "strategy {s:?}, p={p}");
            }
        }
    }

    #[test]
    fn ties_resolved_by_position() {
        // equally spaced integers: every adjacent gap ties
        let x = DataMatrix::from_column((0..100).map(f64::from).collect()).unwrap();
        let rows: Vec<usize> = (0..100).collect();
        for s in [PairSearch::Brute, PairSearch::KdTree] {
            let (got, _) = closest_pairs(&x, &rows, 5, DistanceMetric::Euclidean, s);
            let got: Vec<(usize, usize)> = got.iter().map(|c| (c.a, c.b)).collect();
            assert_eq!(got, vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)]);
        }
    }

    #[test]
    fn duplicate_points() {
        let x = DataMatrix::from_rows(&vec![[1.0, 1.0]; 70]).unwrap();
        let rows: Vec<usize> = (0..70).collect();
        let (a, _) = closest_pairs(&x, &rows, 10, DistanceMetric::Euclidean, PairSearch::Brute);
        let (b, _) = closest_pairs(&x, &rows, 10, DistanceMetric::Euclidean, PairSearch::KdTree);
        assert_eq!(a, b);
        assert_eq!(flat(&a), oracle(&x, &rows, 10));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn kd_matches_brute(vals in prop::collection::vec(-50i32..50, 2..400), k in 1usize..40) {
            // coarse integer grid forces many ties
            let n = vals.len() / 2;
            prop_assume!(n >= 2);
            let x = DataMatrix::new(n, 2, vals[..2 * n].iter().map(|&v| f64::from(v)).collect()).unwrap();
            let rows: Vec<usize> = (0..n).collect();
            let k = k.min(n - 1).max(1);
            let (a, _) = closest_pairs(&x, &rows, k, DistanceMetric::Euclidean, PairSearch::Brute);
            let (b, _) = closest_pairs(&x, &rows, k, DistanceMetric::Euclidean, PairSearch::KdTree);
            prop_assert_eq!(a, b);
        }
    }
}
