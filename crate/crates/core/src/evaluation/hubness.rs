use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{assign_to_nearest_centroid, kmeans_vectors, Clustering, KMeansParams};
use crate::corpus::{Corpus, QuerySet};
use crate::error::{Error, Result};
use crate::geometry::{centroid, cosine_from_parts, distance, dot, norm, squared_euclidean, DistanceMetric, Scalar};
use crate::rng::derive_seed;
use crate::synthgen::{sample_gaussian_corpus, sample_gaussian_queries, Basis, SpectrumSpec};

use super::CentroidScope;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Population {
    /// Each stored vector against the other stored vectors.
    Corpus,
    /// Each query against all stored vectors.
    Query,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScopeKind {
    Global,
    ClusterWise,
}

impl From<CentroidScope> for ScopeKind {
    fn from(s: CentroidScope) -> Self {
        match s {
            CentroidScope::Global => ScopeKind::Global,
            CentroidScope::ClusterWise { .. } => ScopeKind::ClusterWise,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HubnessEntry {
    pub dim: usize,
    pub corpus_size: usize,
    pub metric: DistanceMetric,
    pub scope: ScopeKind,
    pub population: Population,
    /// Fraction of points whose centroid is strictly closer than every other
    /// stored vector.
    pub probability: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HubnessReport {
    pub entries: Vec<HubnessEntry>,
}

/// Norm cache so cosine distances are not recomputed from scratch per pair.
struct PairwiseKernel<'a> {
    vectors: Vec<&'a [f32]>,
    norms: Vec<f64>,
    metric: DistanceMetric,
}

impl<'a> PairwiseKernel<'a> {
    fn new(corpus: &'a Corpus, metric: DistanceMetric) -> Result<Self> {
        let vectors: Vec<&[f32]> = corpus.vectors().collect();
        let norms: Vec<f64> = match metric {
            DistanceMetric::Euclidean => Vec::new(),
            DistanceMetric::Cosine => vectors.iter().map(|v| norm(v)).collect(),
        };
        if norms.contains(&0.0) {
            return Err(Error::ZeroVector);
        }
        Ok(PairwiseKernel {
            vectors,
            norms,
            metric,
        })
    }

    /// Is `to_centroid` strictly below the distance from `x` to every stored
    /// vector except `skip`? Returns early on the first counterexample.
    fn centroid_wins<T: Scalar>(&self, x: &[T], to_centroid: f64, skip: Option<usize>) -> bool {
        match self.metric {
            DistanceMetric::Euclidean => {
                let bound = to_centroid * to_centroid;
                self.vectors
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| Some(*j) != skip)
                    .all(|(_, v)| squared_euclidean(x, v) > bound)
            }
            DistanceMetric::Cosine => {
                let nx = norm(x);
                self.vectors
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| Some(*j) != skip)
                    .all(|(j, v)| {
                        cosine_from_parts(dot(x, v), nx, self.norms[j]) > to_centroid
                    })
            }
        }
    }
}

/// Fraction of the population for which the scope centroid is strictly
/// closer than any stored vector (other than the point itself).
pub fn hubness_probability(
    corpus: &Corpus,
    queries: Option<&QuerySet>,
    metric: DistanceMetric,
    scope: CentroidScope,
    population: Population,
) -> Result<HubnessEntry> {
    if corpus.len() < 2 {
        return Err(Error::invalid("hubness needs at least 2 stored vectors"));
    }
    let kernel = PairwiseKernel::new(corpus, metric)?;
    let clustering: Option<Clustering> = match scope {
        CentroidScope::Global => None,
        CentroidScope::ClusterWise { clusters, seed } => Some(kmeans_vectors(
            &kernel.vectors,
            metric,
            &KMeansParams::new(clusters, seed),
        )?),
    };
    let global = match scope {
        CentroidScope::Global => Some(centroid(corpus.vectors())?),
        CentroidScope::ClusterWise { .. } => None,
    };

    let wins: Vec<bool> = match population {
        Population::Corpus => (0..corpus.len())
            .into_par_iter()
            .map(|i| {
                let x = kernel.vectors[i];
                let c = match (&clustering, &global) {
                    (Some(cl), _) => &cl.centroids[cl.assignments[i]],
                    (None, Some(g)) => g,
                    _ => unreachable!(),
                };
                let dc = distance(x, c, metric)?;
                Ok(kernel.centroid_wins(x, dc, Some(i)))
            })
            .collect::<Result<_>>()?,
        Population::Query => {
            let queries = queries.ok_or_else(|| Error::invalid("query population needs queries"))?;
            if queries.dim() != corpus.dim() {
                return Err(Error::DimensionMismatch {
                    expected: corpus.dim(),
                    actual: queries.dim(),
                });
            }
            if queries.is_empty() {
                return Err(Error::Empty("queries"));
            }
            queries
                .queries()
                .par_iter()
                .map(|q| {
                    let x = q.vector.as_slice();
                    let c = match (&clustering, &global) {
                        (Some(cl), _) => &cl.centroids[assign_to_nearest_centroid(x, cl, metric)?],
                        (None, Some(g)) => g,
                        _ => unreachable!(),
                    };
                    let dc = distance(x, c, metric)?;
                    Ok(kernel.centroid_wins(x, dc, None))
                })
                .collect::<Result<_>>()?
        }
    };
    let samples = wins.len();
    let probability = wins.iter().filter(|&&w| w).count() as f64 / samples as f64;
    Ok(HubnessEntry {
        dim: corpus.dim(),
        corpus_size: corpus.len(),
        metric,
        scope: scope.into(),
        population,
        probability,
        samples,
    })
}

/// Spectrum family used for every grid cell: `lambda1 * i^(-gamma)` with a
/// random mean of norm `mean_scale * sqrt(trace)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpectrum {
    pub gamma: f64,
    #[serde(default = "one")]
    pub lambda1: f64,
    #[serde(default)]
    pub mean_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl GridSpectrum {
    pub fn at_dim(&self, dim: usize, seed: u64) -> Result<SpectrumSpec> {
        let spec = SpectrumSpec::power_law(dim, self.lambda1, self.gamma)?;
        if self.mean_scale == 0.0 {
            return Ok(spec);
        }
        let r = self.mean_scale * spec.trace().sqrt();
        let mean = crate::synthgen::random_unit_vector(dim, seed)
            .into_iter()
            .map(|x| x * r)
            .collect();
        spec.with_mean(mean)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HubnessSweep {
    pub dims: Vec<usize>,
    pub sizes: Vec<usize>,
    pub metrics: Vec<DistanceMetric>,
    pub scopes: Vec<ScopeKind>,
    pub populations: Vec<Population>,
    pub spectrum: GridSpectrum,
    /// Queries drawn per cell for the query population.
    #[serde(default = "default_queries")]
    pub queries: usize,
    /// Independent corpora per cell; probabilities are averaged.
    #[serde(default = "one_usize")]
    pub trials: usize,
    pub seed: u64,
}

fn default_queries() -> usize {
    100
}

fn one_usize() -> usize {
    1
}

/// Cluster count giving about 100 vectors per cluster.
pub fn grid_cluster_count(n: usize) -> usize {
    ((n as f64 / 100.0).round() as usize).clamp(1, n)
}

/// Evaluates every (dim, size, metric, scope, population) cell on freshly
/// sampled synthetic corpora.
pub fn hubness_grid(sweep: &HubnessSweep) -> Result<HubnessReport> {
    if sweep.dims.is_empty()
        || sweep.sizes.is_empty()
        || sweep.metrics.is_empty()
        || sweep.scopes.is_empty()
        || sweep.populations.is_empty()
    {
        return Err(Error::Empty("hubness sweep axis"));
    }
    if sweep.trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let mut entries = Vec::new();
    for &dim in &sweep.dims {
        let spec = sweep.spectrum.at_dim(dim, derive_seed(sweep.seed, dim as u64))?;
        for &n in &sweep.sizes {
            let mut cells: Vec<HubnessEntry> = Vec::new();
            for trial in 0..sweep.trials {
                let seed = derive_seed(sweep.seed, (dim as u64) << 40 | (n as u64) << 8 | trial as u64);
                let corpus = sample_gaussian_corpus(&spec, n, seed, Basis::Axis)?;
                let queries = sample_gaussian_queries(&spec, sweep.queries.max(1), derive_seed(seed, 1), Basis::Axis)?;
                let mut i = 0;
                for &metric in &sweep.metrics {
                    for &scope in &sweep.scopes {
                        let scope = match scope {
                            ScopeKind::Global => CentroidScope::Global,
                            ScopeKind::ClusterWise => CentroidScope::ClusterWise {
                                clusters: grid_cluster_count(n),
                                seed: derive_seed(seed, 2),
                            },
                        };
                        for &population in &sweep.populations {
                            let e = hubness_probability(&corpus, Some(&queries), metric, scope, population)?;
                            if trial == 0 {
                                cells.push(e);
                            } else {
                                cells[i].probability += e.probability;
                                cells[i].samples += e.samples;
                            }
                            i += 1;
                        }
                    }
                }
            }
            for mut e in cells {
                e.probability /= sweep.trials as f64;
                entries.push(e);
            }
        }
    }
    Ok(HubnessReport { entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_points_are_always_hubs() {
        let c = Corpus::from_vectors(vec![vec![0.0, 1.0], vec![3.0, -2.0]], DistanceMetric::Euclidean)
            .unwrap();
        let e = hubness_probability(&c, None, DistanceMetric::Euclidean, CentroidScope::Global, Population::Corpus)
            .unwrap();
        assert_eq!(e.probability, 1.0);
        assert_eq!(e.samples, 2);
    }

    #[test]
    fn regular_simplex() {
        let h = 3f32.sqrt() / 2.0;
        let c = Corpus::from_vectors(
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, h]],
            DistanceMetric::Euclidean,
        )
        .unwrap();
        let e = hubness_probability(&c, None, DistanceMetric::Euclidean, CentroidScope::Global, Population::Corpus)
            .unwrap();
        assert_eq!(e.probability, 1.0);
    }

    #[test]
    fn query_population_requires_queries() {
        let c = Corpus::from_vectors(vec![vec![0.0, 1.0], vec![3.0, -2.0]], DistanceMetric::Euclidean)
            .unwrap();
        assert!(hubness_probability(&c, None, DistanceMetric::Euclidean, CentroidScope::Global, Population::Query)
            .is_err());
    }

    #[test]
    fn ties_are_not_hub_events() {
        // centroid of {-1, 1, 1} is 1/3; x=1 has a duplicate at distance 0
        let c = Corpus::from_vectors(vec![vec![-1.0], vec![1.0], vec![1.0]], DistanceMetric::Euclidean)
            .unwrap();
        let e = hubness_probability(&c, None, DistanceMetric::Euclidean, CentroidScope::Global, Population::Corpus)
            .unwrap();
        assert!((e.probability - 1.0 / 3.0).abs() < 1e-12);
    }
}
