//! Distance kernels, centroids and normalization.
//!
//! Stored vectors are `f32`; every accumulation happens in `f64`. Kernels are
//! generic over [`Scalar`] so queries and derived vectors (centroids,
//! transformed queries) can stay in `f64`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    #[default]
    Euclidean,
    Cosine,
}

impl DistanceMetric {
    pub fn name(self) -> &'static str {
        match self {
            DistanceMetric::Euclidean => "euclidean",
            DistanceMetric::Cosine => "cosine",
        }
    }
}

impl std::fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for DistanceMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" | "l2" => Ok(DistanceMetric::Euclidean),
            "cosine" | "cos" => Ok(DistanceMetric::Cosine),
            other => Err(Error::invalid(format!("unknown metric '{other}'"))),
        }
    }
}

/// Vector component types the kernels accept.
pub trait Scalar: Copy + Send + Sync + 'static {
    fn widen(self) -> f64;
}

impl Scalar for f32 {
    #[inline(always)]
    fn widen(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline(always)]
    fn widen(self) -> f64 {
        self
    }
}

const LANES: usize = 8;

/// Sums `f(a_i, b_i)` with eight independent accumulators so the loop can be
/// vectorized; the summation order is fixed, so results are reproducible.
#[inline(always)]
fn lane_sum<A: Scalar, B: Scalar>(a: &[A], b: &[B], f: impl Fn(f64, f64) -> f64) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0f64; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..LANES {
            acc[k] += f(x[k].widen(), y[k].widen());
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += f(x.widen(), y.widen());
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline]
pub fn dot<A: Scalar, B: Scalar>(a: &[A], b: &[B]) -> f64 {
    lane_sum(a, b, |x, y| x * y)
}

#[inline]
pub fn squared_norm<A: Scalar>(a: &[A]) -> f64 {
    lane_sum(a, a, |x, _| x * x)
}

#[inline]
pub fn norm<A: Scalar>(a: &[A]) -> f64 {
    squared_norm(a).sqrt()
}

#[inline]
pub fn squared_euclidean<A: Scalar, B: Scalar>(a: &[A], b: &[B]) -> f64 {
    lane_sum(a, b, |x, y| {
        let d = x - y;
        d * d
    })
}

/// Cosine distance from a precomputed dot product and norms. Shared with the
/// indexes so cached norms give bit-identical values to [`distance`].
#[inline]
pub fn cosine_from_parts(dot: f64, norm_a: f64, norm_b: f64) -> f64 {
    (1.0 - dot / (norm_a * norm_b)).clamp(0.0, 2.0)
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a,
            actual: b,
        });
    }
    if a == 0 {
        return Err(Error::Empty("vector"));
    }
    Ok(())
}

/// Distance under `metric`. Cosine distance is `1 - cos` on the raw vectors
/// and rejects zero vectors.
pub fn distance<A: Scalar, B: Scalar>(a: &[A], b: &[B], metric: DistanceMetric) -> Result<f64> {
    check_dims(a.len(), b.len())?;
    match metric {
        DistanceMetric::Euclidean => Ok(squared_euclidean(a, b).sqrt()),
        DistanceMetric::Cosine => {
            let (na, nb) = (norm(a), norm(b));
            if na == 0.0 || nb == 0.0 {
                return Err(Error::ZeroVector);
            }
            Ok(cosine_from_parts(dot(a, b), na, nb))
        }
    }
}

/// Component-wise arithmetic mean, summed in input order.
pub fn centroid<'a, T, I>(vectors: I) -> Result<Vec<f64>>
where
    T: Scalar,
    I: IntoIterator<Item = &'a [T]>,
{
    let mut iter = vectors.into_iter();
    let first = iter.next().ok_or(Error::Empty("centroid input"))?;
    let mut sum: Vec<f64> = first.iter().map(|x| x.widen()).collect();
    let mut count = 1usize;
    for v in iter {
        if v.len() != sum.len() {
            return Err(Error::DimensionMismatch {
                expected: sum.len(),
                actual: v.len(),
            });
        }
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x.widen();
        }
        count += 1;
    }
    let inv = count as f64;
    sum.iter_mut().for_each(|s| *s /= inv);
    Ok(sum)
}

pub fn l2_normalize<T: Scalar>(v: &[T]) -> Result<Vec<f64>> {
    let n = norm(v);
    if n == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(v.iter().map(|x| x.widen() / n).collect())
}

/// Narrows an `f64` vector for storage.
pub fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

pub fn to_f64<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.widen()).collect()
}

/// Index of the first non-finite component, if any.
pub fn first_non_finite(v: &[f32]) -> Option<usize> {
    v.iter().position(|x| !x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn distance_examples() {
        let e = DistanceMetric::Euclidean;
        let c = DistanceMetric::Cosine;
        assert_eq!(distance(&[1.0f32, 0.0], &[1.0f32, 0.0], e).unwrap(), 0.0);
        let d = distance(&[1.0f32, 0.0], &[0.0f32, 1.0], e).unwrap();
        assert!((d - std::f64::consts::SQRT_2).abs() < 1e-12);
        assert_eq!(distance(&[1.0f32, 0.0], &[0.0f32, 1.0], c).unwrap(), 1.0);
        assert_eq!(distance(&[2.0f32, 0.0], &[1.0f32, 0.0], c).unwrap(), 0.0);
    }

    #[test]
    fn distance_errors() {
        assert!(matches!(
            distance(&[1.0f32], &[1.0f32, 2.0], DistanceMetric::Euclidean),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            distance(&[0.0f32, 0.0], &[1.0f32, 2.0], DistanceMetric::Cosine),
            Err(Error::ZeroVector)
        ));
    }

    #[test]
    fn centroid_examples() {
        let a = [0.0f32, 0.0];
        let b = [2.0f32, 0.0];
        assert_eq!(centroid([&a[..], &b[..]]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(centroid([&b[..]]).unwrap(), vec![2.0, 0.0]);
        assert!(matches!(
            centroid(std::iter::empty::<&[f32]>()),
            Err(Error::Empty(_))
        ));
        let c = [1.0f32];
        assert!(centroid([&a[..], &c[..]]).is_err());
    }

    #[test]
    fn centroid_of_gaussian_sample() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let pts: Vec<[f32; 2]> = (0..1000)
            .map(|_| {
                [
                    (3.0 + noise.sample(&mut rng)) as f32,
                    (-1.0 + noise.sample(&mut rng)) as f32,
                ]
            })
            .collect();
        let c = centroid(pts.iter().map(|p| &p[..])).unwrap();
        // direct summation oracle
        let sx: f64 = pts.iter().map(|p| p[0] as f64).sum::<f64>() / 1000.0;
        let sy: f64 = pts.iter().map(|p| p[1] as f64).sum::<f64>() / 1000.0;
        assert!((c[0] - sx).abs() < 1e-12 && (c[1] - sy).abs() < 1e-12);
        assert!((c[0] - 3.0).abs() < 0.05 && (c[1] + 1.0).abs() < 0.05);
    }

    #[test]
    fn normalize_examples() {
        let v = l2_normalize(&[3.0f32, 4.0]).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] - 0.8).abs() < 1e-15);
        assert_eq!(l2_normalize(&[1.0f32, 0.0, 0.0]).unwrap(), vec![1.0, 0.0, 0.0]);
        assert!(matches!(l2_normalize(&[0.0f32; 3]), Err(Error::ZeroVector)));
        let u = l2_normalize(&[0.3f64, -0.2, 0.9]).unwrap();
        let uu = l2_normalize(&u).unwrap();
        for (a, b) in u.iter().zip(&uu) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn metric_parses() {
        assert_eq!("Cosine".parse::<DistanceMetric>().unwrap(), DistanceMetric::Cosine);
        assert!("manhattan".parse::<DistanceMetric>().is_err());
    }
}
