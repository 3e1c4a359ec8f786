//! Anisotropic Gaussian corpora and covariance statistics.

use std::path::Path;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, QuerySet};
use crate::error::{Error, Result};
use crate::geometry::{to_f32, DistanceMetric};
use crate::rng::stream_rng;

/// Dimension above which the covariance matrix is never materialized.
pub const DENSE_COVARIANCE_MAX_DIM: usize = 2048;

/// Mean vector and eigen-spectrum of a Gaussian N(mean, R diag(eigenvalues) Rᵀ).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumSpec {
    eigenvalues: Vec<f64>,
    mean: Vec<f64>,
}

impl SpectrumSpec {
    pub fn new(eigenvalues: Vec<f64>, mean: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::invalid("spectrum must have positive dimension"));
        }
        if mean.len() != eigenvalues.len() {
            return Err(Error::DimensionMismatch {
                expected: eigenvalues.len(),
                actual: mean.len(),
            });
        }
        if eigenvalues.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::invalid("eigenvalues must be finite and non-negative"));
        }
        if eigenvalues.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::invalid("eigenvalues must be non-increasing"));
        }
        if !eigenvalues.iter().any(|l| *l > 0.0) {
            return Err(Error::invalid("at least one eigenvalue must be positive"));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid("mean must be finite"));
        }
        Ok(SpectrumSpec { eigenvalues, mean })
    }

    /// Zero-mean spectrum with `lambda1 * i^(-gamma)`, i = 1..=dim.
    pub fn power_law(dim: usize, lambda1: f64, gamma: f64) -> Result<Self> {
        if !(lambda1 > 0.0) || !(gamma >= 0.0) {
            return Err(Error::invalid("power law needs lambda1 > 0 and gamma >= 0"));
        }
        let eig = (1..=dim).map(|i| lambda1 * (i as f64).powf(-gamma)).collect();
        SpectrumSpec::new(eig, vec![0.0; dim])
    }

    pub fn isotropic(dim: usize, lambda: f64) -> Result<Self> {
        SpectrumSpec::new(vec![lambda; dim], vec![0.0; dim])
    }

    pub fn with_mean(self, mean: Vec<f64>) -> Result<Self> {
        SpectrumSpec::new(self.eigenvalues, mean)
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Total variance, the trace of the covariance.
    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Exact statistics of the generating covariance, tagged with sample size `n`.
    pub fn analytic_stats(&self, n: usize) -> CovarianceStats {
        let m1 = self.trace();
        let m2 = self.eigenvalues.iter().map(|l| l * l).sum();
        let l_op = self.eigenvalues[0];
        CovarianceStats::from_moments(m1, m2, l_op, n, self.dim())
            .expect("validated spectrum has positive moments")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: SpectrumDoc = serde_json::from_str(&text)?;
        doc.resolve()
    }
}

/// JSON form of a spectrum: `{dim, eigenvalues | power_law: {lambda1, gamma}, mean}`.
///
/// `mean` may be an explicit vector or `{"norm": r, "seed": s}` for a random
/// direction scaled to norm `r`. A missing mean is the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumDoc {
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigenvalues: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_law: Option<PowerLaw>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<MeanDoc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerLaw {
    #[serde(default = "one")]
    pub lambda1: f64,
    pub gamma: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeanDoc {
    Vector(Vec<f64>),
    Random { norm: f64, seed: u64 },
}

impl SpectrumDoc {
    pub fn power_law(dim: usize, gamma: f64) -> Self {
        SpectrumDoc {
            dim,
            eigenvalues: None,
            power_law: Some(PowerLaw { lambda1: 1.0, gamma }),
            mean: None,
        }
    }

    pub fn resolve(&self) -> Result<SpectrumSpec> {
        let spec = match (&self.eigenvalues, &self.power_law) {
            (Some(eig), None) => {
                if eig.len() != self.dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim,
                        actual: eig.len(),
                    });
                }
                SpectrumSpec::new(eig.clone(), vec![0.0; self.dim])?
            }
            (None, Some(p)) => SpectrumSpec::power_law(self.dim, p.lambda1, p.gamma)?,
            _ => {
                return Err(Error::invalid(
                    "spectrum needs exactly one of 'eigenvalues' or 'power_law'",
                ))
            }
        };
        match &self.mean {
            None => Ok(spec),
            Some(MeanDoc::Vector(m)) => spec.with_mean(m.clone()),
            Some(MeanDoc::Random { norm, seed }) => {
                let dir = random_unit_vector(self.dim, *seed);
                spec.with_mean(dir.into_iter().map(|x| x * norm).collect())
            }
        }
    }
}

/// Uniformly distributed unit vector, deterministic per seed.
pub fn random_unit_vector(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, u64::MAX);
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Basis {
    /// Eigenvectors are the coordinate axes.
    #[default]
    Axis,
    /// Eigenvectors are the columns of a Haar-random orthogonal matrix drawn
    /// from `seed`.
    RandomRotation { seed: u64 },
}

/// Haar-distributed orthogonal matrix via QR of a Gaussian matrix with the
/// sign of R's diagonal folded into Q.
pub fn random_orthogonal(dim: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = stream_rng(seed, u64::MAX - 1);
    let g = DMatrix::from_fn(dim, dim, |_, _| StandardNormal.sample(&mut rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Draws `n` vectors from the spectrum. Record `i` uses its own generator
/// stream, so the output does not depend on scheduling.
pub fn sample_gaussian_vectors(
    spec: &SpectrumSpec,
    n: usize,
    seed: u64,
    basis: Basis,
) -> Vec<Vec<f32>> {
    let dim = spec.dim();
    let scales: Vec<f64> = spec.eigenvalues.iter().map(|l| l.sqrt()).collect();
    let rotation = match basis {
        Basis::Axis => None,
        Basis::RandomRotation { seed } => Some(random_orthogonal(dim, seed)),
    };
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let y: Vec<f64> = scales
                .iter()
                .map(|s| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    s * z
                })
                .collect();
            let x: Vec<f64> = match &rotation {
                None => spec.mean.iter().zip(&y).map(|(m, v)| m + v).collect(),
                Some(r) => {
                    let ry = r * nalgebra::DVector::from_vec(y);
                    spec.mean.iter().zip(ry.iter()).map(|(m, v)| m + v).collect()
                }
            };
            to_f32(&x)
        })
        .collect()
}

/// A benign corpus of `n` samples with ids `0..n` and Euclidean metric.
pub fn sample_gaussian_corpus(
    spec: &SpectrumSpec,
    n: usize,
    seed: u64,
    basis: Basis,
) -> Result<Corpus> {
    if n == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    Corpus::from_vectors(
        sample_gaussian_vectors(spec, n, seed, basis),
        DistanceMetric::Euclidean,
    )
}

pub fn sample_gaussian_queries(
    spec: &SpectrumSpec,
    n: usize,
    seed: u64,
    basis: Basis,
) -> Result<QuerySet> {
    if n == 0 {
        return Err(Error::invalid("query count must be at least 1"));
    }
    QuerySet::from_vectors(sample_gaussian_vectors(spec, n, seed, basis))
}

/// Trace statistics of a covariance matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceStats {
    /// tr Σ
    pub m1: f64,
    /// tr Σ², the squared Frobenius norm
    pub m2: f64,
    /// largest eigenvalue
    pub l_op: f64,
    /// m1² / m2
    pub d_eff: f64,
    /// m1 / l_op
    pub eff_rank: f64,
    pub n: usize,
    pub dim: usize,
}

impl CovarianceStats {
    pub fn from_moments(m1: f64, m2: f64, l_op: f64, n: usize, dim: usize) -> Result<Self> {
        if !(m1 > 0.0 && m2 > 0.0 && l_op > 0.0) || !(m1 * m2 * l_op).is_finite() {
            return Err(Error::invalid(format!(
                "covariance moments must be positive and finite (m1={m1}, m2={m2}, l_op={l_op})"
            )));
        }
        Ok(CovarianceStats {
            m1,
            m2,
            l_op,
            d_eff: m1 * m1 / m2,
            eff_rank: m1 / l_op,
            n,
            dim,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovarianceMethod {
    /// Dense up to [`DENSE_COVARIANCE_MAX_DIM`], implicit above.
    #[default]
    Auto,
    /// Materialize Σ and eigen-solve it.
    Dense,
    /// Gram-matrix moments and power iteration on the implicit operator.
    Implicit,
}

/// Statistics of the unbiased sample covariance.
pub fn estimate_covariance_stats(corpus: &Corpus) -> Result<CovarianceStats> {
    estimate_covariance_stats_with(corpus, CovarianceMethod::Auto)
}

pub fn estimate_covariance_stats_with(
    corpus: &Corpus,
    method: CovarianceMethod,
) -> Result<CovarianceStats> {
    let n = corpus.len();
    if n < 2 {
        return Err(Error::invalid(format!(
            "covariance needs at least 2 records, got {n}"
        )));
    }
    let dim = corpus.dim();
    let centered = centered_matrix(corpus);
    let dense = match method {
        CovarianceMethod::Auto => dim <= DENSE_COVARIANCE_MAX_DIM,
        CovarianceMethod::Dense => true,
        CovarianceMethod::Implicit => false,
    };
    let scale = 1.0 / (n as f64 - 1.0);
    let (m1, m2, l_op) = if dense {
        let sigma = centered.tr_mul(&centered) * scale;
        let m1 = sigma.trace();
        let m2 = sigma.norm_squared();
        let l_op = sigma
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        (m1, m2, l_op)
    } else {
        let m1 = centered.norm_squared() * scale;
        let gram = &centered * centered.transpose();
        let m2 = gram.norm_squared() * scale * scale;
        let l_op = power_iteration(&centered, 1e-12, 10_000) * scale;
        (m1, m2, l_op)
    };
    CovarianceStats::from_moments(m1, m2, l_op, n, dim)
}

/// n × d matrix of records minus their mean.
fn centered_matrix(corpus: &Corpus) -> DMatrix<f64> {
    let n = corpus.len();
    let dim = corpus.dim();
    let mut x = DMatrix::<f64>::from_fn(n, dim, |i, j| corpus.vector(i)[j] as f64);
    for j in 0..dim {
        let mut col = x.column_mut(j);
        let mean = col.sum() / n as f64;
        col.add_scalar_mut(-mean);
    }
    x
}

/// Largest eigenvalue of XᵀX without forming it, by power iteration with a
/// Rayleigh-quotient stopping rule.
fn power_iteration(x: &DMatrix<f64>, rel_tol: f64, max_iters: usize) -> f64 {
    let dim = x.ncols();
    let mut v = nalgebra::DVector::from_vec(random_unit_vector(dim, 0x5eed));
    let mut estimate = 0.0;
    for _ in 0..max_iters {
        let w = x.tr_mul(&(x * &v));
        let rayleigh = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        if (rayleigh - estimate).abs() <= rel_tol * rayleigh.abs() {
            return rayleigh;
        }
        estimate = rayleigh;
    }
    estimate
}
