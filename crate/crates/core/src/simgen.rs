//! Seeded synthetic datasets with ground-truth labels.
//!
//! Rows are generated in fixed-size blocks, each with its own derived
//! stream, so output is independent of thread count.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NuggetError, Result};
use crate::linalg::{orthonormalize_columns, Mat};
use crate::matrix::DataMatrix;
use crate::nugget::{CenterMode, DataNugget, NuggetSet, ReductionStats};
use crate::rng::SeedStream;
use crate::scalar::Scalar;

/// A generated matrix and the generating group of every row.
#[derive(Clone, Debug)]
pub struct Simulated<T> {
    pub data: DataMatrix<T>,
    pub labels: Vec<usize>,
}

const BLOCK: usize = 4096;

/// Generates `n` rows of width `p` block by block; `f` fills one row.
fn generate<F>(n: usize, p: usize, stream: SeedStream, f: F) -> Vec<f64>
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) + Sync,
{
    let mut out = vec![0.0; n * p];
    if p == 0 {
        return out;
    }
    out.par_chunks_mut(BLOCK * p).enumerate().for_each(|(b, chunk)| {
        let mut rng = stream.index(b as u64).rng();
        for row in chunk.chunks_exact_mut(p) {
            f(&mut rng, row);
        }
    });
    out
}

fn finish<T: Scalar>(p: usize, values: Vec<f64>, labels: Vec<usize>) -> Result<Simulated<T>> {
    let data = DataMatrix::new(labels.len(), p, values.into_iter().map(T::lit).collect())?;
    Ok(Simulated { data, labels })
}

fn check_scale(scale: f64) -> Result<()> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(NuggetError::param(format!("scale factor must lie in (0, 1], got {scale}")));
    }
    Ok(())
}

/// Standard bivariate normal noise hiding a face: two eyes and a mouth arc.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmileSpec {
    pub n_noise: usize,
    /// Smile points; split 1/6 to each eye and the rest to the mouth.
    pub n_smile: usize,
    pub seed: u64,
}

impl Default for SmileSpec {
    fn default() -> Self {
        Self { n_noise: 15_000, n_smile: 601, seed: 0 }
    }
}

pub const EYE_CENTERS: [(f64, f64); 2] = [(-0.7, 0.6), (0.7, 0.6)];
pub const EYE_RADIUS: f64 = 0.12;
pub const MOUTH_RADIUS: f64 = 1.2;
pub const MOUTH_DEGREES: (f64, f64) = (200.0, 340.0);
pub const MOUTH_JITTER: f64 = 0.03;

/// Label of noise rows in [`gen_smile`]; smile rows get 1.
pub const NOISE_LABEL: usize = 0;

/// Noise rows first, then the eyes (uniform on discs), then the mouth
/// (evenly spaced angles with Gaussian jitter).
pub fn gen_smile<T: Scalar>(spec: &SmileSpec) -> Result<Simulated<T>> {
    let root = SeedStream::new(spec.seed).child("smile");
    let mut values = generate(spec.n_noise, 2, root.child("noise"), |rng, row| {
        row[0] = rng.sample(StandardNormal);
        row[1] = rng.sample(StandardNormal);
    });
    let per_eye = spec.n_smile / 6;
    let mouth = spec.n_smile - 2 * per_eye;
    let mut rng = root.child("face").rng();
    for &(cx, cy) in &EYE_CENTERS {
        for _ in 0..per_eye {
            let r = EYE_RADIUS * rng.random::<f64>().sqrt();
            let t = std::f64::consts::TAU * rng.random::<f64>();
            values.push(cx + r * t.cos());
            values.push(cy + r * t.sin());
        }
    }
    let (a0, a1) = (MOUTH_DEGREES.0.to_radians(), MOUTH_DEGREES.1.to_radians());
    for i in 0..mouth {
        let f = if mouth > 1 { i as f64 / (mouth - 1) as f64 } else { 0.5 };
        let t = a0 + f * (a1 - a0);
        let jx: f64 = rng.sample(StandardNormal);
        let jy: f64 = rng.sample(StandardNormal);
        values.push(MOUTH_RADIUS * t.cos() + MOUTH_JITTER * jx);
        values.push(MOUTH_RADIUS * t.sin() + MOUTH_JITTER * jy);
    }
    let mut labels = vec![NOISE_LABEL; spec.n_noise];
    labels.resize(spec.n_noise + spec.n_smile, 1);
    finish(2, values, labels)
}

/// Three groups of binary condition indicators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinarySimSpec {
    pub p: f64,
    pub n_per_cluster: usize,
    pub n_vars: usize,
    pub seed: u64,
}

impl BinarySimSpec {
    pub fn new(p: f64) -> Self {
        Self { p, n_per_cluster: 100_000, n_vars: 10, seed: 0 }
    }
}

/// Group 0 has the first half of the variables on with probability `1 - p`
/// and the rest with `p`; group 1 is the mirror image; group 2 has every
/// variable on with probability `p`.
pub fn gen_binary_patients<T: Scalar>(spec: &BinarySimSpec) -> Result<Simulated<T>> {
    if !(spec.p > 0.0 && spec.p < 1.0) {
        return Err(NuggetError::param(format!("p must lie in (0, 1), got {}", spec.p)));
    }
    if spec.n_vars < 2 {
        return Err(NuggetError::param("need at least two variables"));
    }
    let hi = Bernoulli::new(spec.p).map_err(|e| NuggetError::param(e.to_string()))?;
    let lo = Bernoulli::new(1.0 - spec.p).map_err(|e| NuggetError::param(e.to_string()))?;
    let half = spec.n_vars / 2;
    let root = SeedStream::new(spec.seed).child("binary");
    let mut values = Vec::with_capacity(3 * spec.n_per_cluster * spec.n_vars);
    let mut labels = Vec::with_capacity(3 * spec.n_per_cluster);
    for g in 0..3 {
        let block = generate(spec.n_per_cluster, spec.n_vars, root.index(g as u64), |rng, row| {
            for (v, cell) in row.iter_mut().enumerate() {
                let first = v < half;
                let d = match (g, first) {
                    (0, true) | (1, false) => &lo,
                    _ => &hi,
                };
                *cell = if d.sample(rng) { 1.0 } else { 0.0 };
            }
        });
        values.extend(block);
        labels.extend(std::iter::repeat_n(g, spec.n_per_cluster));
    }
    finish(spec.n_vars, values, labels)
}

/// One nugget per distinct row of a 0/1 matrix, in order of first
/// appearance, weighted by multiplicity.
pub fn aggregate_unique_rows<T: Scalar>(x: &DataMatrix<T>) -> Result<NuggetSet<T>> {
    let mut index: HashMap<Vec<bool>, usize> = HashMap::new();
    let mut nuggets: Vec<DataNugget<T>> = Vec::new();
    let mut assignment = Vec::with_capacity(x.nrows());
    for (i, row) in x.rows().enumerate() {
        let mut key = Vec::with_capacity(row.len());
        for (c, &v) in row.iter().enumerate() {
            if v == T::zero() {
                key.push(false);
            } else if v == T::one() {
                key.push(true);
            } else {
                return Err(NuggetError::NonBinary { row: i, col: c, value: v.as_f64() });
            }
        }
        let j = *index.entry(key).or_insert_with(|| {
            nuggets.push(DataNugget { center: row.to_vec(), weight: 0, scale: T::zero() });
            nuggets.len() - 1
        });
        nuggets[j].weight += 1;
        assignment.push(j);
    }
    Ok(NuggetSet { nuggets, assignment, center_mode: CenterMode::Mean, params: None, stats: ReductionStats::default() })
}

/// Four spherical Gaussian clusters in six dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gaussian4Spec {
    pub sizes: [usize; 4],
    pub centers: [[f64; 6]; 4],
    pub variance: f64,
    pub seed: u64,
}

impl Default for Gaussian4Spec {
    fn default() -> Self {
        Self {
            sizes: [500_000, 500_000, 50_000, 2_000],
            centers: [
                [1.0, 0.0, 0.0, 0.0, 1.0, 1.0],
                [0.0, 1.0, 0.0, 1.0, 1.0, 0.0],
                [1.0, 1.0, 0.0, 0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0, 1.0, 0.0, 1.0],
            ],
            variance: 0.25,
            seed: 0,
        }
    }
}

impl Gaussian4Spec {
    pub fn scaled_sizes(&self, scale: f64) -> [usize; 4] {
        self.sizes.map(|s| (s as f64 * scale).round() as usize)
    }
}

pub fn gen_gaussian4<T: Scalar>(spec: &Gaussian4Spec, scale: f64) -> Result<Simulated<T>> {
    check_scale(scale)?;
    if !(spec.variance > 0.0) {
        return Err(NuggetError::param("variance must be positive"));
    }
    let sd = spec.variance.sqrt();
    let root = SeedStream::new(spec.seed).child("gaussian4");
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (g, (&n, center)) in spec.scaled_sizes(scale).iter().zip(&spec.centers).enumerate() {
        values.extend(generate(n, 6, root.index(g as u64), |rng, row| {
            for (cell, &c) in row.iter_mut().zip(center) {
                *cell = c + sd * rng.sample::<f64, _>(StandardNormal);
            }
        }));
        labels.extend(std::iter::repeat_n(g, n));
    }
    finish(6, values, labels)
}

/// Three Gaussian clusters in three signal dimensions, padded with
/// standard normal noise dimensions and rotated at random.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LargePSpec {
    pub n_per_cluster: usize,
    pub noise_dims: usize,
    pub rotation_seed: u64,
    pub sample_seed: u64,
}

impl Default for LargePSpec {
    fn default() -> Self {
        Self { n_per_cluster: 200_000, noise_dims: 197, rotation_seed: 0, sample_seed: 0 }
    }
}

pub const SIGNAL_DIMS: usize = 3;
pub const SIGNAL_VARIANCES: [f64; 3] = [4.0, 2.25, 1.0];

pub fn largep_centers() -> [[f64; 3]; 3] {
    let a = 6.0 / 2f64.sqrt();
    let b = 10.0 / 3f64.sqrt();
    [[0.0, 0.0, 10.0], [0.0, a, a], [b, b, b]]
}

/// Output of [`gen_largep`]: the rotated data and the rotation used.
#[derive(Clone, Debug)]
pub struct LargePSim<T> {
    pub sim: Simulated<T>,
    /// Orthogonal `P x P` matrix; rotated row = `rotation * raw row`.
    pub rotation: Mat<f64>,
    /// Unrotated rows.
    pub raw: DataMatrix<T>,
}

/// Random orthogonal matrix: a Gaussian matrix with orthonormalized columns.
pub fn random_rotation(p: usize, seed: u64) -> Mat<f64> {
    let mut rng = SeedStream::new(seed).child("rotation").rng();
    let g: Vec<f64> = (0..p * p).map(|_| rng.sample(StandardNormal)).collect();
    orthonormalize_columns(&Mat::from_vec(p, p, g))
}

pub fn gen_largep<T: Scalar>(spec: &LargePSpec, scale: f64) -> Result<LargePSim<T>> {
    check_scale(scale)?;
    let n = (spec.n_per_cluster as f64 * scale).round() as usize;
    let p = SIGNAL_DIMS + spec.noise_dims;
    let sds = SIGNAL_VARIANCES.map(f64::sqrt);
    let root = SeedStream::new(spec.sample_seed).child("largep");
    let mut raw = Vec::with_capacity(3 * n * p);
    let mut labels = Vec::with_capacity(3 * n);
    for (g, center) in largep_centers().iter().enumerate() {
        raw.extend(generate(n, p, root.index(g as u64), |rng, row| {
            for (d, cell) in row.iter_mut().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                *cell = if d < SIGNAL_DIMS { center[d] + sds[d] * z } else { z };
            }
        }));
        labels.extend(std::iter::repeat_n(g, n));
    }
    let rotation = random_rotation(p, spec.rotation_seed);
    let mut rotated = vec![0.0; raw.len()];
    rotated.par_chunks_mut(p).zip(raw.par_chunks(p)).for_each(|(out, x)| {
        for (i, o) in out.iter_mut().enumerate() {
            *o = rotation.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    });
    let raw = DataMatrix::new(labels.len(), p, raw.into_iter().map(T::lit).collect())?;
    Ok(LargePSim { sim: finish(p, rotated, labels)?, rotation, raw })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smile_shape_and_determinism() {
        let a: Simulated<f64> = gen_smile(&SmileSpec { seed: 3, ..SmileSpec::default() }).unwrap();
        assert_eq!(a.data.nrows(), 15_601);
        assert_eq!(a.labels.iter().filter(|&&l| l == 1).count(), 601);
        let b: Simulated<f64> = gen_smile(&SmileSpec { seed: 3, ..SmileSpec::default() }).unwrap();
        assert_eq!(a.data, b.data);
        let c: Simulated<f64> = gen_smile(&SmileSpec { seed: 4, ..SmileSpec::default() }).unwrap();
        assert_ne!(a.data, c.data);
        // eyes stay on their discs
        for i in 15_000..15_100 {
            let r = a.data.row(i);
            assert!(((r[0] + 0.7).powi(2) + (r[1] - 0.6).powi(2)).sqrt() <= EYE_RADIUS + 1e-12);
        }
    }

    #[test]
    fn binary_cluster_means() {
        let s: Simulated<f64> = gen_binary_patients(&BinarySimSpec { seed: 1, ..BinarySimSpec::new(0.9) }).unwrap();
        assert_eq!(s.data.nrows(), 300_000);
        let z: Vec<usize> = (200_000..300_000).collect();
        let zm = s.data.select_rows(&z).unwrap().column_means();
        assert!(zm.iter().all(|m| (m - 0.9).abs() < 0.01));
        let x: Vec<usize> = (0..100_000).collect();
        let xm = s.data.select_rows(&x).unwrap().column_means();
        assert!(xm[..5].iter().all(|m| (m - 0.1).abs() < 0.01));
        assert!(xm[5..].iter().all(|m| (m - 0.9).abs() < 0.01));
        let set = aggregate_unique_rows(&s.data).unwrap();
        assert!(set.len() <= 1024);
        assert_eq!(set.total_weight(), 300_000);
    }

    #[test]
    fn binary_half_is_uninformative() {
        let s: Simulated<f64> =
            gen_binary_patients(&BinarySimSpec { n_per_cluster: 20_000, ..BinarySimSpec::new(0.5) }).unwrap();
        assert!(s.data.column_means().iter().all(|m| (m - 0.5).abs() < 0.01));
        assert!(gen_binary_patients::<f64>(&BinarySimSpec::new(1.0)).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let x = DataMatrix::from_rows(&[[0.0, 1.0], [0.0, 1.0], [1.0, 0.0]]).unwrap();
        let set = aggregate_unique_rows(&x).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!((set.nuggets[0].center.clone(), set.nuggets[0].weight), (vec![0.0, 1.0], 2));
        assert_eq!((set.nuggets[1].center.clone(), set.nuggets[1].weight), (vec![1.0, 0.0], 1));
        assert_eq!(set.assignment, vec![0, 0, 1]);
        set.check(&x).unwrap();
        let same = DataMatrix::from_rows(&vec![[1.0, 1.0]; 5]).unwrap();
        assert_eq!(aggregate_unique_rows(&same).unwrap().nuggets[0].weight, 5);
        let bad = DataMatrix::from_rows(&[[0.0, 0.5]]).unwrap();
        assert!(matches!(aggregate_unique_rows(&bad), Err(NuggetError::NonBinary { row: 0, col: 1, .. })));
    }

    #[test]
    fn gaussian4_sizes_and_means() {
        let spec = Gaussian4Spec { seed: 2, ..Gaussian4Spec::default() };
        assert_eq!(spec.scaled_sizes(0.1), [50_000, 50_000, 5_000, 200]);
        assert_eq!(spec.sizes.iter().sum::<usize>(), 1_052_000);
        let s: Simulated<f64> = gen_gaussian4(&spec, 0.1).unwrap();
        assert_eq!(s.data.nrows(), 105_200);
        for g in 0..4 {
            let rows: Vec<usize> = (0..s.labels.len()).filter(|&i| s.labels[i] == g).collect();
            let means = s.data.select_rows(&rows).unwrap().column_means();
            let se = 0.5 / (rows.len() as f64).sqrt();
            for (m, c) in means.iter().zip(&spec.centers[g]) {
                assert!((m - c).abs() <= 3.0 * se, "cluster {g}: {m} vs {c}");
            }
        }
        assert!(gen_gaussian4::<f64>(&spec, 0.0).is_err());
    }

    #[test]
    fn rotation_is_orthogonal_and_preserves_trace() {
        let t = random_rotation(200, 5);
        assert!(t.transpose().matmul(&t).max_abs_diff(&Mat::identity(200)) < 1e-10);
        let spec = LargePSpec { n_per_cluster: 2_000, noise_dims: 17, rotation_seed: 1, sample_seed: 2 };
        let s: LargePSim<f64> = gen_largep(&spec, 1.0).unwrap();
        assert_eq!((s.sim.data.nrows(), s.sim.data.ncols()), (6_000, 20));
        let all: Vec<usize> = (0..6_000).collect();
        let (_, before) = crate::linalg::covariance_of_rows(&s.raw, &all);
        let (_, after) = crate::linalg::covariance_of_rows(&s.sim.data, &all);
        assert!((before.trace() - after.trace()).abs() <= 1e-8 * before.trace());
    }
}
