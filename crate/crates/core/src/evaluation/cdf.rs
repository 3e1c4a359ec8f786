use serde::{Deserialize, Serialize};

use crate::clustering::{kmeans_vectors, KMeansParams};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::geometry::{centroid, distance, DistanceMetric};

/// Which centroid each record is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scope", rename_all = "snake_case")]
pub enum CentroidScope {
    Global,
    /// The record's own k-means cluster.
    ClusterWise { clusters: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub distance: f64,
    pub fraction: f64,
}

/// Empirical distribution of a set of distances.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("distance sample"));
        }
        values.sort_unstable_by(f64::total_cmp);
        Ok(EmpiricalCdf { sorted: values })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }

    /// Fraction of values `<= r`.
    pub fn eval(&self, r: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= r) as f64 / self.sorted.len() as f64
    }

    /// The distribution at `num_points` evenly spaced quantile levels. The last
    /// point is the maximum, where the fraction is 1.
    pub fn sample(&self, num_points: usize) -> Vec<CdfPoint> {
        let n = self.sorted.len();
        let num_points = num_points.max(1);
        (1..=num_points)
            .map(|i| {
                let level = i as f64 / num_points as f64;
                let idx = ((level * n as f64).ceil() as usize).clamp(1, n) - 1;
                let distance = self.sorted[idx];
                CdfPoint {
                    distance,
                    fraction: self.eval(distance),
                }
            })
            .collect()
    }
}

/// Distances from every record to its scope's centroid.
pub fn centroid_distances(
    corpus: &Corpus,
    metric: DistanceMetric,
    scope: CentroidScope,
) -> Result<EmpiricalCdf> {
    if corpus.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let distances = match scope {
        CentroidScope::Global => {
            let c = centroid(corpus.vectors())?;
            corpus
                .vectors()
                .map(|v| distance(v, &c, metric))
                .collect::<Result<Vec<_>>>()?
        }
        CentroidScope::ClusterWise { clusters, seed } => {
            let vectors: Vec<&[f32]> = corpus.vectors().collect();
            let clustering = kmeans_vectors(&vectors, metric, &KMeansParams::new(clusters, seed))?;
            vectors
                .iter()
                .zip(&clustering.assignments)
                .map(|(v, &c)| distance(v, &clustering.centroids[c], metric))
                .collect::<Result<Vec<_>>>()?
        }
    };
    EmpiricalCdf::new(distances)
}

pub fn distance_to_centroid_cdf(
    corpus: &Corpus,
    metric: DistanceMetric,
    scope: CentroidScope,
    num_points: usize,
) -> Result<Vec<CdfPoint>> {
    Ok(centroid_distances(corpus, metric, scope)?.sample(num_points))
}
