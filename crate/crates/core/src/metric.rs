use serde::{Deserialize, Serialize};

use crate::error::{NuggetError, Result};
use crate::scalar::Scalar;

/// Distance used to build nuggets. Only Euclidean is provided; the enum
/// leaves room for other metrics without changing call sites.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    #[default]
    Euclidean,
}

impl DistanceMetric {
    /// Checked distance between two points.
    pub fn distance<T: Scalar>(&self, a: &[T], b: &[T]) -> Result<T> {
        if a.len() != b.len() {
            return Err(NuggetError::DimensionMismatch { expected: a.len(), found: b.len() });
        }
        for (i, v) in a.iter().chain(b).enumerate() {
            if !v.is_finite() {
                let (row, col) = if i < a.len() { (0, i) } else { (1, i - a.len()) };
                return Err(NuggetError::NonFinite { row, col });
            }
        }
        Ok(self.from_key(self.key(a, b)))
    }

    /// Monotone surrogate of the distance (squared Euclidean), used for all
    /// comparisons in hot loops. Inputs are assumed validated.
    #[inline]
    pub fn key<T: Scalar>(&self, a: &[T], b: &[T]) -> T {
        match self {
            DistanceMetric::Euclidean => {
                let mut acc = T::zero();
                for (&x, &y) in a.iter().zip(b) {
                    let d = x - y;
                    acc += d * d;
                }
                acc
            }
        }
    }

    /// Maps a surrogate key back to a distance.
    #[inline]
    pub fn from_key<T: Scalar>(&self, key: T) -> T {
        match self {
            DistanceMetric::Euclidean => key.sqrt(),
        }
    }

    /// Surrogate value of a single-coordinate gap, used for kd-tree pruning.
    #[inline]
    pub(crate) fn axis_key<T: Scalar>(&self, gap: T) -> T {
        match self {
            DistanceMetric::Euclidean => gap * gap,
        }
    }
}

impl std::str::FromStr for DistanceMetric {
    type Err = NuggetError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" => Ok(DistanceMetric::Euclidean),
            other => Err(NuggetError::param(format!("unknown metric '{other}'"))),
        }
    }
}

/// Distance between `a` and `b` under `metric`.
pub fn distance<T: Scalar>(a: &[T], b: &[T], metric: DistanceMetric) -> Result<T> {
    metric.distance(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let m = DistanceMetric::Euclidean;
        assert_eq!(distance(&[0.0, 0.0], &[3.0, 4.0], m).unwrap(), 5.0);
        assert_eq!(distance(&[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0], m).unwrap(), 0.0);
        let d = distance(&[0.0f64, 0.0], &[1.0, 1.0], m).unwrap();
        assert!((d - std::f64::consts::SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let m = DistanceMetric::Euclidean;
        assert!(matches!(distance(&[0.0], &[1.0, 2.0], m), Err(NuggetError::DimensionMismatch { .. })));
        assert!(matches!(distance(&[0.0, f64::NAN], &[1.0, 2.0], m), Err(NuggetError::NonFinite { row: 0, col: 1 })));
        assert!(matches!(distance(&[0.0, 1.0], &[1.0, f64::INFINITY], m), Err(NuggetError::NonFinite { row: 1, col: 1 })));
    }

    proptest! {
        #[test]
        fn metric_axioms(a in prop::collection::vec(-1e3f64..1e3, 3), b in prop::collection::vec(-1e3f64..1e3, 3)) {
            let m = DistanceMetric::Euclidean;
            let ab = m.distance(&a, &b).unwrap();
            let ba = m.distance(&b, &a).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, ba);
            prop_assert_eq!(m.distance(&a, &a).unwrap(), 0.0);
        }
    }
}
