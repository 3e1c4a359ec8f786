//! Lloyd's k-means with k-means++ seeding.
//!
//! Clustering always runs on squared Euclidean distance. Under the cosine
//! metric the points are L2-normalized copies, but the centroids reported in
//! the result are means of the original vectors of each cluster.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::geometry::{centroid, distance, l2_normalize, squared_euclidean, DistanceMetric, Scalar};
use crate::rng::stream_rng;

pub const DEFAULT_CLUSTERS: usize = 100;
pub const DEFAULT_MAX_ITERS: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub clusters: usize,
    pub seed: u64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Stop once no centroid moves farther than this (Euclidean).
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_max_iters() -> usize {
    DEFAULT_MAX_ITERS
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

impl KMeansParams {
    pub fn new(clusters: usize, seed: u64) -> Self {
        KMeansParams {
            clusters,
            seed,
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub num_clusters: usize,
    /// Cluster of each record, by corpus position.
    pub assignments: Vec<usize>,
    /// Arithmetic means of the original vectors of each cluster.
    pub centroids: Vec<Vec<f64>>,
    pub sizes: Vec<usize>,
    /// Lloyd iterations performed.
    pub iterations: usize,
    /// Within-cluster sum of squared distances after each assignment step, in
    /// the clustering space.
    pub objective_trace: Vec<f64>,
}

impl Clustering {
    /// Corpus positions of each cluster's members, in corpus order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self.sizes.iter().map(|&s| Vec::with_capacity(s)).collect();
        for (pos, &c) in self.assignments.iter().enumerate() {
            out[c].push(pos);
        }
        out
    }

    /// `{L, sizes, centroids, assignments?}`
    pub fn to_json(&self, include_assignments: bool) -> serde_json::Value {
        let mut v = serde_json::json!({
            "L": self.num_clusters,
            "sizes": self.sizes,
            "centroids": self.centroids,
        });
        if include_assignments {
            v["assignments"] = serde_json::json!(self.assignments);
        }
        v
    }
}

pub fn kmeans(corpus: &Corpus, params: &KMeansParams) -> Result<Clustering> {
    let vectors: Vec<&[f32]> = corpus.vectors().collect();
    kmeans_vectors(&vectors, corpus.metric(), params)
}

/// k-means over arbitrary equal-length vectors.
pub fn kmeans_vectors(
    vectors: &[&[f32]],
    metric: DistanceMetric,
    params: &KMeansParams,
) -> Result<Clustering> {
    let n = vectors.len();
    let l = params.clusters;
    if l == 0 || l > n {
        return Err(Error::invalid(format!(
            "cluster count {l} outside 1..={n}"
        )));
    }
    if params.max_iters == 0 {
        return Err(Error::invalid("max_iters must be at least 1"));
    }
    if !(params.tol >= 0.0) {
        return Err(Error::invalid("tol must be non-negative"));
    }
    let dim = vectors[0].len();
    if let Some(bad) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: bad.len(),
        });
    }

    let points: Vec<f64> = match metric {
        DistanceMetric::Euclidean => vectors
            .iter()
            .flat_map(|v| v.iter().map(|x| x.widen()))
            .collect(),
        DistanceMetric::Cosine => {
            let mut out = Vec::with_capacity(n * dim);
            for v in vectors {
                out.extend(l2_normalize(v)?);
            }
            out
        }
    };
    let point = |i: usize| &points[i * dim..(i + 1) * dim];

    let mut centers = plus_plus_init(&points, dim, l, params.seed);
    let mut assignments = vec![0usize; n];
    let mut costs = vec![0f64; n];
    let mut trace = Vec::new();
    let mut iterations = 0;

    for _ in 0..params.max_iters {
        iterations += 1;
        let nearest: Vec<(usize, f64)> = (0..n)
            .into_par_iter()
            .map(|i| nearest_center(point(i), &centers, dim))
            .collect();
        for (i, (c, d)) in nearest.into_iter().enumerate() {
            assignments[i] = c;
            costs[i] = d;
        }
        repair_empty_clusters(&mut assignments, &mut costs, l);
        let objective: f64 = costs.iter().sum();
        if let Some(&prev) = trace.last() {
            assert!(
                objective <= prev * (1.0 + 1e-9) + 1e-12,
                "k-means objective increased from {prev} to {objective}"
            );
        }
        trace.push(objective);

        let updated = cluster_means(&points, dim, &assignments, l);
        let shift = centers
            .chunks(dim)
            .zip(updated.chunks(dim))
            .map(|(a, b)| squared_euclidean(a, b).sqrt())
            .fold(0.0, f64::max);
        centers = updated;
        if shift < params.tol {
            break;
        }
    }

    let mut members: Vec<Vec<&[f32]>> = vec![Vec::new(); l];
    for (i, &c) in assignments.iter().enumerate() {
        members[c].push(vectors[i]);
    }
    let sizes = members.iter().map(Vec::len).collect();
    let centroids = members
        .iter()
        .map(|m| centroid(m.iter().copied()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Clustering {
        num_clusters: l,
        assignments,
        centroids,
        sizes,
        iterations,
        objective_trace: trace,
    })
}

fn nearest_center(p: &[f64], centers: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.chunks(dim).enumerate() {
        let d = squared_euclidean(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus_init(points: &[f64], dim: usize, l: usize, seed: u64) -> Vec<f64> {
    let n = points.len() / dim;
    let point = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut rng = stream_rng(seed, 0);
    let mut centers = Vec::with_capacity(l * dim);
    let first = rng.random_range(0..n);
    centers.extend_from_slice(point(first));
    let mut d2: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| squared_euclidean(point(i), point(first)))
        .collect();
    for _ in 1..l {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    chosen = Some(i);
                    break;
                }
            }
            // rounding can leave target just above the final sum
            chosen.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).expect("positive total"))
        } else {
            rng.random_range(0..n)
        };
        let c = point(pick).to_vec();
        d2.par_iter_mut().enumerate().for_each(|(i, d)| {
            let nd = squared_euclidean(point(i), &c);
            if nd < *d {
                *d = nd;
            }
        });
        centers.extend(c);
    }
    centers
}

/// Moves the farthest point of the largest cluster into each empty cluster.
fn repair_empty_clusters(assignments: &mut [usize], costs: &mut [f64], l: usize) {
    loop {
        let mut sizes = vec![0usize; l];
        for &c in assignments.iter() {
            sizes[c] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let largest = (0..l)
            .max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a)))
            .expect("l >= 1");
        let farthest = (0..assignments.len())
            .filter(|&i| assignments[i] == largest)
            .max_by(|&a, &b| costs[a].total_cmp(&costs[b]).then(b.cmp(&a)))
            .expect("largest cluster is nonempty");
        assignments[farthest] = empty;
        costs[farthest] = 0.0;
    }
}

fn cluster_means(points: &[f64], dim: usize, assignments: &[usize], l: usize) -> Vec<f64> {
    let mut sums = vec![0f64; l * dim];
    let mut counts = vec![0usize; l];
    for (i, &c) in assignments.iter().enumerate() {
        counts[c] += 1;
        let s = &mut sums[c * dim..(c + 1) * dim];
        for (a, x) in s.iter_mut().zip(&points[i * dim..(i + 1) * dim]) {
            *a += x;
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        let k = count as f64;
        sums[c * dim..(c + 1) * dim].iter_mut().for_each(|s| *s /= k);
    }
    sums
}

/// Nearest reported centroid under `metric`; ties go to the lower index.
pub fn assign_to_nearest_centroid<T: Scalar>(
    v: &[T],
    clustering: &Clustering,
    metric: DistanceMetric,
) -> Result<usize> {
    let mut best = (0usize, f64::INFINITY);
    for (j, c) in clustering.centroids.iter().enumerate() {
        let d = distance(v, c, metric)?;
        if d < best.1 {
            best = (j, d);
        }
    }
    Ok(best.0)
}
