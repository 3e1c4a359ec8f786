//! Black-Hole injection: poisons placed at the global centroid or at every
//! k-means cluster centroid, plus a small Gaussian perturbation.

use std::collections::BTreeSet;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::clustering::{kmeans, Clustering, KMeansParams, DEFAULT_CLUSTERS, DEFAULT_MAX_ITERS, DEFAULT_TOL};
use crate::corpus::{Corpus, Provenance, Record};
use crate::error::{Error, Result};
use crate::evaluation::{centroid_distances, CentroidScope};
use crate::geometry::{centroid, norm, DistanceMetric};
use crate::rng::{derive_seed, stream_rng};

pub const DEFAULT_ALPHA: f64 = 0.01;
/// Default perturbation scale relative to the mean vector norm.
pub const DEFAULT_SIGMA_FRACTION: f64 = 1e-3;
pub const DEFAULT_PAYLOAD: &str = "injected payload (cluster {cluster})";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum AttackMode {
    Global,
    ClusterWise { clusters: usize },
}

impl Default for AttackMode {
    fn default() -> Self {
        AttackMode::ClusterWise {
            clusters: DEFAULT_CLUSTERS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    #[serde(flatten)]
    pub mode: AttackMode,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Perturbation standard deviation; `None` means 1e-3 times the mean
    /// vector norm of the corpus.
    #[serde(default)]
    pub sigma: Option<f64>,
    pub seed: u64,
    /// `{cluster}` is replaced by the cluster index, or `global`.
    #[serde(default = "default_payload")]
    pub payload_template: String,
    #[serde(default = "default_max_iters")]
    pub kmeans_max_iters: usize,
    #[serde(default = "default_tol")]
    pub kmeans_tol: f64,
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_payload() -> String {
    DEFAULT_PAYLOAD.to_string()
}

fn default_max_iters() -> usize {
    DEFAULT_MAX_ITERS
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

impl AttackConfig {
    pub fn new(mode: AttackMode, alpha: f64, seed: u64) -> Self {
        AttackConfig {
            mode,
            alpha,
            sigma: None,
            seed,
            payload_template: default_payload(),
            kmeans_max_iters: DEFAULT_MAX_ITERS,
            kmeans_tol: DEFAULT_TOL,
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = Some(sigma);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha {} must lie in (0, 1)", self.alpha)));
        }
        if let Some(s) = self.sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::invalid(format!("sigma {s} must be finite and >= 0")));
            }
        }
        if let AttackMode::ClusterWise { clusters: 0 } = self.mode {
            return Err(Error::invalid("cluster-wise attack needs at least one cluster"));
        }
        Ok(())
    }

    /// k-means settings used by the cluster-wise attack.
    pub fn kmeans_params(&self, clusters: usize) -> KMeansParams {
        KMeansParams {
            clusters,
            seed: derive_seed(self.seed, 1),
            max_iters: self.kmeans_max_iters,
            tol: self.kmeans_tol,
        }
    }
}

/// The poisoned corpus and a summary of what was injected.
#[derive(Debug, Clone)]
pub struct AttackOutcome {
    pub corpus: Corpus,
    pub injected_ids: BTreeSet<u64>,
    /// ⌊αN⌋
    pub budget: usize,
    /// Injections per target centroid (one entry for the global attack).
    pub per_cluster: Vec<usize>,
    pub sigma: f64,
    /// Set when nothing was injected because the budget floored to zero.
    pub zero_injection: bool,
}

/// ⌊αN⌋, tolerant of α values like 0.015 that are not exact in binary.
pub fn injection_budget(alpha: f64, n: usize) -> usize {
    (alpha * n as f64 * (1.0 + 1e-12)).floor() as usize
}

/// 1e-3 × mean Euclidean norm.
pub fn default_sigma(corpus: &Corpus) -> f64 {
    let total: f64 = corpus.vectors().map(norm).sum();
    DEFAULT_SIGMA_FRACTION * total / corpus.len() as f64
}

fn check_clean(corpus: &Corpus) -> Result<()> {
    if corpus.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    if corpus.is_poisoned() {
        return Err(Error::AlreadyPoisoned);
    }
    Ok(())
}

/// Perturbed copy of `center` for poison `index` aimed at `cluster`. Cluster 0
/// uses the same streams as the global attack.
fn poison_vector(center: &[f64], sigma: f64, seed: u64, cluster: usize, index: usize) -> Vec<f32> {
    let mut rng = stream_rng(seed, (cluster as u64) << 32 | index as u64);
    center
        .iter()
        .map(|&c| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (c + sigma * z) as f32
        })
        .collect()
}

fn inject(
    corpus: &Corpus,
    cfg: &AttackConfig,
    targets: &[(String, &[f64], usize)],
    budget: usize,
) -> Result<AttackOutcome> {
    let sigma = cfg.sigma.unwrap_or_else(|| default_sigma(corpus));
    let mut next_id = corpus.max_id().map_or(0, |m| m + 1);
    let mut records = Vec::new();
    for (cluster, (label, center, count)) in targets.iter().enumerate() {
        let content = cfg.payload_template.replace("{cluster}", label);
        for index in 0..*count {
            records.push(Record {
                id: next_id,
                vector: poison_vector(center, sigma, cfg.seed, cluster, index),
                content: Some(content.clone()),
                provenance: Provenance::Injected,
            });
            next_id += 1;
        }
    }
    let injected_ids = records.iter().map(|r| r.id).collect::<BTreeSet<_>>();
    let zero_injection = records.is_empty();
    if zero_injection {
        log::warn!(
            "budget {budget} floors to zero for each of {} targets; corpus returned unchanged",
            targets.len()
        );
    }
    Ok(AttackOutcome {
        corpus: corpus.extended(records)?,
        injected_ids,
        budget,
        per_cluster: targets.iter().map(|t| t.2).collect(),
        sigma,
        zero_injection,
    })
}

/// Injects ⌊αN⌋ vectors around the corpus centroid.
pub fn global_centroid_attack(corpus: &Corpus, cfg: &AttackConfig) -> Result<AttackOutcome> {
    cfg.validate()?;
    check_clean(corpus)?;
    let c = centroid(corpus.vectors())?;
    let budget = injection_budget(cfg.alpha, corpus.len());
    inject(corpus, cfg, &[("global".to_string(), &c, budget)], budget)
}

/// Clusters the corpus and injects ⌊M·|C_j|/N⌋ vectors around each centroid.
pub fn cluster_wise_attack(corpus: &Corpus, cfg: &AttackConfig) -> Result<AttackOutcome> {
    cfg.validate()?;
    check_clean(corpus)?;
    let clusters = match cfg.mode {
        AttackMode::ClusterWise { clusters } => clusters,
        AttackMode::Global => return Err(Error::invalid("cluster-wise attack needs a cluster count")),
    };
    if clusters > corpus.len() {
        return Err(Error::invalid(format!(
            "{clusters} clusters exceed corpus size {}",
            corpus.len()
        )));
    }
    let clustering = kmeans(corpus, &cfg.kmeans_params(clusters))?;
    cluster_wise_attack_with(corpus, cfg, &clustering)
}

/// Cluster-wise attack over an existing clustering of `corpus`.
pub fn cluster_wise_attack_with(
    corpus: &Corpus,
    cfg: &AttackConfig,
    clustering: &Clustering,
) -> Result<AttackOutcome> {
    cfg.validate()?;
    check_clean(corpus)?;
    if clustering.assignments.len() != corpus.len() {
        return Err(Error::invalid("clustering does not match the corpus"));
    }
    let n = corpus.len();
    let budget = injection_budget(cfg.alpha, n);
    let targets: Vec<(String, &[f64], usize)> = clustering
        .centroids
        .iter()
        .zip(&clustering.sizes)
        .enumerate()
        .map(|(j, (c, &size))| (j.to_string(), c.as_slice(), budget * size / n))
        .collect();
    inject(corpus, cfg, &targets, budget)
}

/// Runs whichever attack `cfg.mode` names.
pub fn run_attack(corpus: &Corpus, cfg: &AttackConfig) -> Result<AttackOutcome> {
    match cfg.mode {
        AttackMode::Global => global_centroid_attack(corpus, cfg),
        AttackMode::ClusterWise { .. } => cluster_wise_attack(corpus, cfg),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BlackHoleRadius {
    Global(f64),
    PerCluster(Vec<f64>),
}

/// Smallest distance from the scope centroid to a stored vector: the radius
/// of the empty ball around it.
pub fn black_hole_radius(
    corpus: &Corpus,
    scope: CentroidScope,
    metric: DistanceMetric,
) -> Result<BlackHoleRadius> {
    if corpus.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    match scope {
        CentroidScope::Global => Ok(BlackHoleRadius::Global(
            centroid_distances(corpus, metric, scope)?.min(),
        )),
        CentroidScope::ClusterWise { clusters, seed } => {
            let vectors: Vec<&[f32]> = corpus.vectors().collect();
            let clustering = crate::clustering::kmeans_vectors(
                &vectors,
                metric,
                &KMeansParams::new(clusters, seed),
            )?;
            let mut radii = vec![f64::INFINITY; clusters];
            for (v, &c) in vectors.iter().zip(&clustering.assignments) {
                let d = crate::geometry::distance(v, &clustering.centroids[c], metric)?;
                radii[c] = radii[c].min(d);
            }
            if radii.iter().any(|r| r.is_infinite()) {
                return Err(Error::Empty("cluster"));
            }
            Ok(BlackHoleRadius::PerCluster(radii))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_floors() {
        assert_eq!(injection_budget(0.01, 50), 0);
        assert_eq!(injection_budget(0.01, 1000), 10);
        assert_eq!(injection_budget(0.015, 1000), 15);
        assert_eq!(injection_budget(0.001, 999), 0);
        assert_eq!(injection_budget(0.3, 10), 3);
    }

    #[test]
    fn unit_square_radius() {
        let c = Corpus::from_vectors(
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]],
            DistanceMetric::Euclidean,
        )
        .unwrap();
        let r = black_hole_radius(&c, CentroidScope::Global, DistanceMetric::Euclidean).unwrap();
        let BlackHoleRadius::Global(r) = r else { panic!() };
        assert!((r - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn radius_zero_when_centroid_is_stored() {
        let c = Corpus::from_vectors(vec![vec![-1.0, 0.0], vec![0.0, 0.0], vec![1.0, 0.0]], DistanceMetric::Euclidean)
            .unwrap();
        let r = black_hole_radius(&c, CentroidScope::Global, DistanceMetric::Euclidean).unwrap();
        assert_eq!(r, BlackHoleRadius::Global(0.0));
    }
}
