//! Sampling for synthetic corpora: one Gaussian core plus optional
//! satellites sharing its covariance.

use blackhole_core::corpus::{Corpus, QuerySet};
use blackhole_core::rng::{derive_seed, stream_rng};
use blackhole_core::synthgen::{random_unit_vector, sample_gaussian_vectors, Basis, SpectrumSpec};
use blackhole_core::{DistanceMetric, Error, Result};
use rand::seq::SliceRandom;

use crate::config::SyntheticCorpus;

const CORPUS_STREAM: u64 = 1 << 32;
const QUERY_STREAM: u64 = 2 << 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    core: SpectrumSpec,
    /// Weight and spectrum (shifted mean) of each satellite.
    satellites: Vec<(f64, SpectrumSpec)>,
    basis: Basis,
    seed: u64,
}

impl Mixture {
    pub fn new(cfg: &SyntheticCorpus) -> Result<Self> {
        let mut core = cfg.spectrum.resolve()?;
        let scale = core.trace().sqrt();
        if cfg.mean_scale > 0.0 {
            let dir = random_unit_vector(core.dim(), derive_seed(cfg.seed, 0));
            core = core.with_mean(dir.iter().map(|x| x * cfg.mean_scale * scale).collect())?;
        }
        let satellites = cfg
            .satellites
            .iter()
            .enumerate()
            .map(|(j, s)| {
                let dir = random_unit_vector(core.dim(), derive_seed(cfg.seed, j as u64 + 1));
                let mean = core
                    .mean()
                    .iter()
                    .zip(&dir)
                    .map(|(m, u)| m + u * s.offset * scale)
                    .collect();
                Ok((s.weight, core.clone().with_mean(mean)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Mixture {
            core,
            satellites,
            basis: cfg.basis,
            seed: cfg.seed,
        })
    }

    /// The core component, whose covariance every component shares.
    pub fn core(&self) -> &SpectrumSpec {
        &self.core
    }

    pub fn dim(&self) -> usize {
        self.core.dim()
    }

    /// Records per component: satellites get `round(weight * n)`, the core the
    /// remainder.
    pub fn allocation(&self, n: usize) -> Result<Vec<usize>> {
        let sat: Vec<usize> = self
            .satellites
            .iter()
            .map(|(w, _)| (w * n as f64).round() as usize)
            .collect();
        let used: usize = sat.iter().sum();
        if used > n {
            return Err(Error::invalid(format!("satellites need {used} of {n} records")));
        }
        Ok(std::iter::once(n - used).chain(sat).collect())
    }

    fn sample(&self, n: usize, seed: u64) -> Result<Vec<Vec<f32>>> {
        let counts = self.allocation(n)?;
        let specs = std::iter::once(&self.core).chain(self.satellites.iter().map(|(_, s)| s));
        let mut out = Vec::with_capacity(n);
        for (j, (spec, count)) in specs.zip(counts).enumerate() {
            out.extend(sample_gaussian_vectors(spec, count, derive_seed(seed, j as u64), self.basis));
        }
        if !self.satellites.is_empty() {
            out.shuffle(&mut stream_rng(seed, u64::MAX));
        }
        Ok(out)
    }

    /// `n` benign records with ids `0..n`.
    pub fn sample_corpus(&self, n: usize, metric: DistanceMetric) -> Result<Corpus> {
        if n == 0 {
            return Err(Error::invalid("corpus size must be positive"));
        }
        Corpus::from_vectors(self.sample(n, derive_seed(self.seed, CORPUS_STREAM))?, metric)
    }

    /// Queries from the same distribution; `seed` defaults to a stream derived
    /// from the corpus seed.
    pub fn sample_queries(&self, count: usize, seed: Option<u64>) -> Result<QuerySet> {
        if count == 0 {
            return Err(Error::invalid("query count must be positive"));
        }
        let seed = seed.unwrap_or_else(|| derive_seed(self.seed, QUERY_STREAM));
        QuerySet::from_vectors(self.sample(count, seed)?)
    }
}
