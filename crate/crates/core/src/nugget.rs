//! Nugget domain types: the reduced units, their container, and the
//! parameters and counters of a reduction run.

use serde::{Deserialize, Serialize};

use crate::error::{NuggetError, Result};
use crate::matrix::DataMatrix;
use crate::metric::DistanceMetric;
use crate::pairs::PairSearch;
use crate::scalar::Scalar;

/// One reduced unit: where it sits, how many observations it stands for,
/// and how spread out those observations are.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DataNugget<T> {
    pub center: Vec<T>,
    /// Number of observations summarised (>= 1).
    pub weight: u64,
    /// Trace of the member covariance divided by `P`; zero for singletons.
    pub scale: T,
}

impl<T: Scalar> DataNugget<T> {
    pub fn new(center: Vec<T>, weight: u64, scale: T) -> Result<Self> {
        if weight == 0 {
            return Err(NuggetError::param("nugget weight must be at least 1"));
        }
        if !(scale >= T::zero()) {
            return Err(NuggetError::param("nugget scale must be nonnegative"));
        }
        if weight == 1 && scale != T::zero() {
            return Err(NuggetError::param("a singleton nugget has zero scale"));
        }
        Ok(Self { center, weight, scale })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }
}

/// How a nugget's final center is chosen from its members.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CenterMode {
    /// Arithmetic mean of the members.
    #[default]
    Mean,
    /// A uniformly drawn member. Centers then depend on the draw and the
    /// covariance decomposition no longer holds exactly; use with care.
    Random,
}

impl std::str::FromStr for CenterMode {
    type Err = NuggetError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mean" => Ok(CenterMode::Mean),
            "random" => Ok(CenterMode::Random),
            other => Err(NuggetError::param(format!("unknown center mode '{other}'"))),
        }
    }
}

/// Parameters of nugget creation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionParams {
    /// Subset size `R`; the number of subsets is `ceil(N / R)`.
    pub subset_size: usize,
    /// Proportion `C` of closest pairs acted on per deletion round.
    pub deletion_rate: f64,
    /// Number of intermediate centers kept after the per-subset stage.
    pub m_init: usize,
    /// Final number of nuggets.
    pub m: usize,
    pub center_mode: CenterMode,
    pub metric: DistanceMetric,
    pub seed: u64,
    #[serde(default)]
    pub pair_search: PairSearch,
}

impl ReductionParams {
    pub const DEFAULT_SUBSET_SIZE: usize = 5000;
    pub const DEFAULT_DELETION_RATE: f64 = 0.05;
    pub const DEFAULT_M_INIT: usize = 10_000;

    /// Defaults for an `n x p` input: `R = 5000`, `C = 0.05`,
    /// `M_init = min(10000, N)` and `M = round(sqrt(N P))` clamped to
    /// `[100, M_init]`.
    pub fn defaults_for(n: usize, p: usize) -> Self {
        let m_init = Self::DEFAULT_M_INIT.min(n);
        Self {
            subset_size: Self::DEFAULT_SUBSET_SIZE,
            deletion_rate: Self::DEFAULT_DELETION_RATE,
            m_init,
            m: default_nugget_count(n, p, m_init),
            center_mode: CenterMode::Mean,
            metric: DistanceMetric::Euclidean,
            seed: 0,
            pair_search: PairSearch::Auto,
        }
    }

    pub fn with_m(mut self, m: usize) -> Self {
        self.m = m;
        self
    }

    pub fn with_m_init(mut self, m_init: usize) -> Self {
        self.m_init = m_init;
        self
    }

    pub fn with_subset_size(mut self, r: usize) -> Self {
        self.subset_size = r;
        self
    }

    pub fn with_deletion_rate(mut self, c: f64) -> Self {
        self.deletion_rate = c;
        self
    }

    pub fn with_center_mode(mut self, mode: CenterMode) -> Self {
        self.center_mode = mode;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_pair_search(mut self, search: PairSearch) -> Self {
        self.pair_search = search;
        self
    }

    /// Number of subsets for `n` rows.
    pub fn subsets(&self, n: usize) -> usize {
        n.div_ceil(self.subset_size.max(1)).max(1)
    }

    /// Checks `M <= M_init <= N`, `0 < C < 1` and `R >= 2`.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.subset_size < 2 {
            return Err(NuggetError::param(format!("subset size R must be at least 2, got {}", self.subset_size)));
        }
        if !(self.deletion_rate > 0.0 && self.deletion_rate < 1.0) {
            return Err(NuggetError::param(format!("deletion rate C must lie in (0, 1), got {}", self.deletion_rate)));
        }
        if self.m == 0 {
            return Err(NuggetError::param("M must be at least 1"));
        }
        if self.m_init > n {
            return Err(NuggetError::param(format!("M_init = {} exceeds N = {n}", self.m_init)));
        }
        if self.m > self.m_init {
            return Err(NuggetError::param(format!("M = {} exceeds M_init = {}", self.m, self.m_init)));
        }
        Ok(())
    }
}

/// `round(sqrt(N P))` clamped to `[100, m_init]`.
pub fn default_nugget_count(n: usize, p: usize, m_init: usize) -> usize {
    let raw = ((n as f64) * (p as f64)).sqrt().round() as usize;
    raw.max(100).min(m_init).max(1)
}

/// Distance evaluation counters of a reduction run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistanceEvals {
    /// Spent finding closest pairs in both deletion stages.
    pub reduction: u64,
    /// Spent assigning every observation to its nearest center; exactly
    /// `N * M` for a full run.
    pub assignment: u64,
}

/// Iteration counts and cost counters of a reduction run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReductionStats {
    /// Number of subsets `G`.
    pub subsets: usize,
    /// Per subset: deletion rounds plus the terminating check, or 0 when
    /// the subset passed through unreduced.
    pub psi1_per_subset: Vec<usize>,
    /// Same count for the second stage, or 0 when it did not run.
    pub psi2: usize,
    /// Rows in the concatenated intermediate center set.
    pub intermediate_centers: usize,
    pub distance_evals: DistanceEvals,
    pub wall_time: f64,
}

/// A set of nuggets built from a data matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct NuggetSet<T> {
    pub nuggets: Vec<DataNugget<T>>,
    /// Nugget index of every observation.
    pub assignment: Vec<usize>,
    pub center_mode: CenterMode,
    /// Creation parameters, when the set came from a reduction run.
    pub params: Option<ReductionParams>,
    pub stats: ReductionStats,
}

impl<T: Scalar> NuggetSet<T> {
    pub fn len(&self) -> usize {
        self.nuggets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nuggets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.nuggets.first().map_or(0, DataNugget::dim)
    }

    pub fn total_weight(&self) -> u64 {
        self.nuggets.iter().map(|n| n.weight).sum()
    }

    /// Nugget centers as an `M x P` matrix.
    pub fn centers(&self) -> Result<DataMatrix<T>> {
        centers_matrix(&self.nuggets)
    }

    pub fn weights(&self) -> Vec<T> {
        self.nuggets.iter().map(|n| T::from_count(n.weight as usize)).collect()
    }

    /// Member row indices of every nugget, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        members_of(&self.assignment, self.nuggets.len())
    }

    /// Verifies the container invariants against the source matrix: total
    /// assignment, nonempty nuggets, weights equal to member counts, weight
    /// conservation, and (mean mode) centers equal to member means.
    pub fn check(&self, x: &DataMatrix<T>) -> Result<()> {
        if self.assignment.len() != x.nrows() {
            return Err(NuggetError::DimensionMismatch { expected: x.nrows(), found: self.assignment.len() });
        }
        let members = self.members();
        let mut total = 0u64;
        for (j, (nug, mem)) in self.nuggets.iter().zip(&members).enumerate() {
            if mem.is_empty() {
                return Err(NuggetError::EmptyNugget(j));
            }
            if nug.weight != mem.len() as u64 {
                return Err(NuggetError::param(format!("nugget {j} weight {} but {} members", nug.weight, mem.len())));
            }
            total += nug.weight;
            if self.center_mode == CenterMode::Mean {
                let (mean, _) = crate::linalg::covariance_of_rows(x, mem);
                for (&c, &m) in nug.center.iter().zip(&mean) {
                    let tol = T::lit(1e-9) * (T::one() + m.abs());
                    if (c - m).abs() > tol {
                        return Err(NuggetError::param(format!("nugget {j} center differs from member mean")));
                    }
                }
            }
        }
        if total != x.nrows() as u64 {
            return Err(NuggetError::param(format!("weights sum to {total}, expected {}", x.nrows())));
        }
        Ok(())
    }
}

pub(crate) fn centers_matrix<T: Scalar>(nuggets: &[DataNugget<T>]) -> Result<DataMatrix<T>> {
    let p = nuggets.first().ok_or_else(|| NuggetError::Empty("no nuggets".into()))?.dim();
    let mut values = Vec::with_capacity(nuggets.len() * p);
    for n in nuggets {
        if n.dim() != p {
            return Err(NuggetError::DimensionMismatch { expected: p, found: n.dim() });
        }
        values.extend_from_slice(&n.center);
    }
    DataMatrix::new(nuggets.len(), p, values)
}

pub(crate) fn members_of(assignment: &[usize], m: usize) -> Vec<Vec<usize>> {
    let mut members = vec![Vec::new(); m];
    for (i, &j) in assignment.iter().enumerate() {
        if j < m {
            members[j].push(i);
        }
    }
    members
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nugget_invariants() {
        assert!(DataNugget::new(vec![0.0], 0, 0.0).is_err());
        assert!(DataNugget::new(vec![0.0], 1, 0.5).is_err());
        assert!(DataNugget::new(vec![0.0], 2, -1.0).is_err());
        assert!(DataNugget::new(vec![0.0], 2, 0.0).is_ok());
    }

    #[test]
    fn params_validation() {
        let p = ReductionParams::defaults_for(100, 2).with_m(10).with_m_init(20).with_subset_size(50);
        assert!(p.validate(100).is_ok());
        assert_eq!(p.subsets(100), 2);
        assert!(p.clone().with_m_init(101).validate(100).is_err());
        assert!(p.clone().with_m(21).validate(100).is_err());
        assert!(p.clone().with_deletion_rate(1.0).validate(100).is_err());
        assert!(p.clone().with_deletion_rate(0.0).validate(100).is_err());
        assert!(p.clone().with_subset_size(1).validate(100).is_err());
    }

    #[test]
    fn default_m_follows_sqrt_np() {
        // N = 1e6, P = 9 -> 3000
        assert_eq!(default_nugget_count(1_000_000, 9, 10_000), 3000);
        assert_eq!(default_nugget_count(400, 1, 400), 100);
        assert_eq!(default_nugget_count(50, 1, 50), 50);
        let d = ReductionParams::defaults_for(1_000_000, 9);
        assert_eq!((d.subset_size, d.m_init, d.m), (5000, 10_000, 3000));
        assert_eq!(d.deletion_rate, 0.05);
    }
}
