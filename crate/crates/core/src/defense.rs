//! Defenses: centering + L2 normalization (CL2), per-dimension z-scores (ZN),
//! query-side centroid projection removal (TCPR) and probe-based detection.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{kmeans, KMeansParams, DEFAULT_CLUSTERS, DEFAULT_MAX_ITERS, DEFAULT_TOL};
use crate::corpus::{Corpus, Provenance, QuerySet, Record};
use crate::error::{Error, Result};
use crate::evaluation::{attack_metrics, recall_at_k, MetricsReport};
use crate::geometry::{centroid, dot, l2_normalize, norm, to_f32, DistanceMetric, Scalar};
use crate::index::{brute_force_batch, build_index, IndexHandle, IndexParams, SearchResult};
use crate::rng::{derive_seed, stream_rng};

pub const DEFAULT_TCPR_KAPPA: usize = 10;
pub const DEFAULT_DETECTION_K: usize = 10;
pub const ZSCORE_STD_FLOOR: f64 = 1e-8;
const TCPR_MIN_CENTROID_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformKind {
    CenteredL2 { mean: Vec<f64> },
    ZScore { means: Vec<f64>, stds: Vec<f64> },
    Tcpr { kappa: usize },
}

/// A fitted transform and the fingerprint of the corpus it was fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformModel {
    pub kind: TransformKind,
    pub fingerprint: u64,
}

/// FNV-1a over record ids and vector bits.
pub fn corpus_fingerprint(corpus: &Corpus) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |bytes: &[u8]| {
        for b in bytes {
            h ^= *b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    };
    for r in corpus.records() {
        feed(&r.id.to_le_bytes());
        for x in &r.vector {
            feed(&x.to_bits().to_le_bytes());
        }
    }
    h
}

pub fn fit_cl2(corpus: &Corpus) -> Result<TransformModel> {
    Ok(TransformModel {
        kind: TransformKind::CenteredL2 {
            mean: centroid(corpus.vectors())?,
        },
        fingerprint: corpus_fingerprint(corpus),
    })
}

/// `l2_normalize(v - mean)`; a vector equal to the mean is an error.
pub fn apply_cl2<T: Scalar>(model: &TransformModel, v: &[T]) -> Result<Vec<f64>> {
    let TransformKind::CenteredL2 { mean } = &model.kind else {
        return Err(Error::invalid("not a CL2 model"));
    };
    check_len(mean.len(), v.len())?;
    let centered: Vec<f64> = v.iter().zip(mean).map(|(x, m)| x.widen() - m).collect();
    l2_normalize(&centered)
}

/// Per-dimension mean and unbiased standard deviation.
pub fn fit_zscore(corpus: &Corpus) -> Result<TransformModel> {
    let n = corpus.len();
    if n < 2 {
        return Err(Error::invalid("z-score fit needs at least 2 records"));
    }
    let means = centroid(corpus.vectors())?;
    let mut var = vec![0f64; corpus.dim()];
    for v in corpus.vectors() {
        for ((s, x), m) in var.iter_mut().zip(v).zip(&means) {
            let d = *x as f64 - m;
            *s += d * d;
        }
    }
    let stds = var
        .into_iter()
        .map(|s| (s / (n as f64 - 1.0)).sqrt().max(ZSCORE_STD_FLOOR))
        .collect();
    Ok(TransformModel {
        kind: TransformKind::ZScore { means, stds },
        fingerprint: corpus_fingerprint(corpus),
    })
}

pub fn apply_zscore<T: Scalar>(model: &TransformModel, v: &[T]) -> Result<Vec<f64>> {
    let TransformKind::ZScore { means, stds } = &model.kind else {
        return Err(Error::invalid("not a z-score model"));
    };
    check_len(means.len(), v.len())?;
    Ok(v.iter()
        .zip(means.iter().zip(stds))
        .map(|(x, (m, s))| (x.widen() - m) / s)
        .collect())
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// Result of a vector transform; `degenerate` marks vectors that collapsed to
/// zero and were kept as the zero vector (CL2) or left untransformed (TCPR).
#[derive(Debug, Clone, PartialEq)]
pub struct Transformed {
    pub vector: Vec<f64>,
    pub degenerate: bool,
}

fn apply_stored<T: Scalar>(model: &TransformModel, v: &[T]) -> Result<Transformed> {
    match &model.kind {
        TransformKind::CenteredL2 { .. } => match apply_cl2(model, v) {
            Ok(vector) => Ok(Transformed {
                vector,
                degenerate: false,
            }),
            Err(Error::ZeroVector) => Ok(Transformed {
                vector: vec![0.0; v.len()],
                degenerate: true,
            }),
            Err(e) => Err(e),
        },
        TransformKind::ZScore { .. } => Ok(Transformed {
            vector: apply_zscore(model, v)?,
            degenerate: false,
        }),
        TransformKind::Tcpr { .. } => Err(Error::invalid("TCPR transforms queries only")),
    }
}

/// Corpus in transformed space, searched with Euclidean distance. Ids and
/// provenance are preserved.
#[derive(Debug, Clone)]
pub struct TransformedCorpus {
    pub corpus: Corpus,
    pub degenerate_ids: Vec<u64>,
}

pub fn transform_corpus(model: &TransformModel, corpus: &Corpus) -> Result<TransformedCorpus> {
    let mut degenerate_ids = Vec::new();
    let mut records = Vec::with_capacity(corpus.len());
    for r in corpus.records() {
        let t = apply_stored(model, &r.vector)?;
        if t.degenerate {
            degenerate_ids.push(r.id);
        }
        records.push(Record {
            id: r.id,
            vector: to_f32(&t.vector),
            content: r.content.clone(),
            provenance: r.provenance,
        });
    }
    if !degenerate_ids.is_empty() {
        log::warn!(
            "{} records coincide with the fitted mean and map to the zero vector",
            degenerate_ids.len()
        );
    }
    Ok(TransformedCorpus {
        corpus: Corpus::new(corpus.dim(), DistanceMetric::Euclidean, records)?,
        degenerate_ids,
    })
}

/// Removes from `query` its component along the centroid of its top-`kappa`
/// neighbours in `index`. A query that collapses to zero is returned unchanged
/// and flagged.
pub fn apply_tcpr<T: Scalar>(query: &[T], index: &IndexHandle, kappa: usize) -> Result<Transformed> {
    if kappa == 0 {
        return Err(Error::invalid("kappa must be at least 1"));
    }
    let q: Vec<f64> = query.iter().map(|x| x.widen()).collect();
    let neighbours = index.search(&q, kappa)?;
    let vectors: Vec<&[f32]> = neighbours
        .ids()
        .map(|id| index.vector(index.position_of(id).expect("hit ids come from the index")))
        .collect();
    let mu = centroid(vectors.iter().copied())?;
    let mu_norm = norm(&mu);
    if mu_norm < TCPR_MIN_CENTROID_NORM {
        return Ok(Transformed {
            vector: q,
            degenerate: false,
        });
    }
    let unit: Vec<f64> = mu.iter().map(|m| m / mu_norm).collect();
    let proj = dot(&q, &unit);
    let projected: Vec<f64> = q.iter().zip(&unit).map(|(x, u)| x - proj * u).collect();
    if norm(&projected) <= 1e-12 * norm(&q).max(f64::MIN_POSITIVE) {
        return Ok(Transformed {
            vector: q,
            degenerate: true,
        });
    }
    Ok(Transformed {
        vector: projected,
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionParams {
    #[serde(default = "default_clusters")]
    pub clusters: usize,
    #[serde(default = "default_detection_k")]
    pub k: usize,
    pub seed: u64,
    #[serde(default = "default_max_iters")]
    pub kmeans_max_iters: usize,
    #[serde(default = "default_tol")]
    pub kmeans_tol: f64,
}

fn default_clusters() -> usize {
    DEFAULT_CLUSTERS
}

fn default_detection_k() -> usize {
    DEFAULT_DETECTION_K
}

fn default_kappa() -> usize {
    DEFAULT_TCPR_KAPPA
}

fn default_max_iters() -> usize {
    DEFAULT_MAX_ITERS
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

impl DetectionParams {
    pub fn new(clusters: usize, seed: u64) -> Self {
        DetectionParams {
            clusters,
            k: DEFAULT_DETECTION_K,
            seed,
            kmeans_max_iters: DEFAULT_MAX_ITERS,
            kmeans_tol: DEFAULT_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionOutcome {
    pub removed: BTreeSet<u64>,
    /// Hit count of every record, in corpus order.
    pub hit_counts: Vec<u32>,
    /// Median of the strictly positive hit counts.
    pub median: f64,
    pub threshold: f64,
    pub probe_ids: Vec<u64>,
    pub warning: Option<String>,
}

/// Probes per cluster: `max(1, ceil(0.01 |C|))`.
pub fn probe_count(cluster_size: usize) -> usize {
    cluster_size.div_ceil(100).max(1)
}

/// Median of the strictly positive values; the mean of the middle pair for an
/// even count.
pub fn median_of_positive(counts: &[u32]) -> Option<f64> {
    let mut pos: Vec<u32> = counts.iter().copied().filter(|&c| c > 0).collect();
    if pos.is_empty() {
        return None;
    }
    pos.sort_unstable();
    let mid = pos.len() / 2;
    Some(if pos.len() % 2 == 1 {
        pos[mid] as f64
    } else {
        (pos[mid - 1] as f64 + pos[mid] as f64) / 2.0
    })
}

/// Samples cluster-stratified probes, counts how often each record appears in
/// a probe's top-k over the whole corpus (self-hits included) and drops every
/// record whose count exceeds twice the positive median.
pub fn detect_and_filter(corpus: &Corpus, params: &DetectionParams) -> Result<(DetectionOutcome, Corpus)> {
    if params.k == 0 {
        return Err(Error::invalid("detection k must be at least 1"));
    }
    if corpus.len() < params.clusters {
        return Err(Error::invalid(format!(
            "corpus of {} records cannot form {} clusters",
            corpus.len(),
            params.clusters
        )));
    }
    let clustering = kmeans(
        corpus,
        &KMeansParams {
            clusters: params.clusters,
            seed: derive_seed(params.seed, 1),
            max_iters: params.kmeans_max_iters,
            tol: params.kmeans_tol,
        },
    )?;
    let probe_seed = derive_seed(params.seed, 2);
    let mut probes = Vec::new();
    for (j, members) in clustering.members().into_iter().enumerate() {
        let mut rng = stream_rng(probe_seed, j as u64);
        let mut picked = sample(&mut rng, members.len(), probe_count(members.len())).into_vec();
        picked.sort_unstable();
        probes.extend(picked.into_iter().map(|i| members[i]));
    }
    let index = build_index(corpus, IndexParams::Flat, params.seed)?;
    let neighbours: Vec<SearchResult> = probes
        .par_iter()
        .map(|&p| index.search(corpus.vector(p), params.k))
        .collect::<Result<_>>()?;
    let mut hit_counts = vec![0u32; corpus.len()];
    for r in &neighbours {
        for id in r.ids() {
            hit_counts[index.position_of(id).expect("hit ids come from the index")] += 1;
        }
    }
    let (median, warning) = match median_of_positive(&hit_counts) {
        Some(m) => (m, None),
        None => (0.0, Some("no record was hit by any probe; nothing removed".to_string())),
    };
    let threshold = 2.0 * median;
    let removed: BTreeSet<u64> = if warning.is_some() {
        BTreeSet::new()
    } else {
        corpus
            .records()
            .iter()
            .zip(&hit_counts)
            .filter(|(_, &h)| h as f64 > threshold)
            .map(|(r, _)| r.id)
            .collect()
    };
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    let filtered = corpus.filter(|r| !removed.contains(&r.id));
    Ok((
        DetectionOutcome {
            removed,
            hit_counts,
            median,
            threshold,
            probe_ids: probes.iter().map(|&p| corpus.records()[p].id).collect(),
            warning,
        },
        filtered,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DefenseSpec {
    #[default]
    None,
    CenteredL2,
    #[serde(rename = "zscore")]
    ZScore,
    Tcpr {
        #[serde(default = "default_kappa")]
        kappa: usize,
    },
    Detection {
        #[serde(default = "default_clusters")]
        clusters: usize,
        #[serde(default = "default_detection_k")]
        k: usize,
    },
}

impl DefenseSpec {
    pub fn name(&self) -> &'static str {
        match self {
            DefenseSpec::None => "none",
            DefenseSpec::CenteredL2 => "cl2",
            DefenseSpec::ZScore => "zscore",
            DefenseSpec::Tcpr { .. } => "tcpr",
            DefenseSpec::Detection { .. } => "detection",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionSummary {
    pub removed_injected: usize,
    pub removed_benign: usize,
    pub injected_total: usize,
    pub benign_total: usize,
    pub median: f64,
    pub threshold: f64,
}

impl DetectionSummary {
    fn new(corpus: &Corpus, outcome: &DetectionOutcome) -> Self {
        let removed_injected = corpus
            .records()
            .iter()
            .filter(|r| r.provenance == Provenance::Injected && outcome.removed.contains(&r.id))
            .count();
        DetectionSummary {
            removed_injected,
            removed_benign: outcome.removed.len() - removed_injected,
            injected_total: corpus.count(Provenance::Injected),
            benign_total: corpus.count(Provenance::Benign),
            median: outcome.median,
            threshold: outcome.threshold,
        }
    }
}

/// Defended retrieval on the poisoned corpus plus the utility cost on the
/// clean corpus, both scored against clean original-space ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefenseEvaluation {
    pub defense: DefenseSpec,
    pub undefended: MetricsReport,
    /// Attack metrics with the defense in place; `recall_at_k` is set.
    pub defended: MetricsReport,
    /// R@K of defended retrieval over the clean corpus.
    pub utility_recall: f64,
    /// Stored vectors or queries that collapsed under the transform.
    pub degenerate_vectors: usize,
    pub detection: Option<DetectionSummary>,
    pub utility_detection: Option<DetectionSummary>,
}

struct DefendedRun {
    results: Vec<SearchResult>,
    degenerate: usize,
    detection: Option<DetectionSummary>,
}

fn search_vectors(index: &IndexHandle, queries: &QuerySet, vectors: &[Vec<f64>], k: usize) -> Result<Vec<SearchResult>> {
    vectors
        .par_iter()
        .zip(queries.queries())
        .map(|(v, q)| {
            let mut r = index.search(v, k)?;
            r.query_id = q.id;
            Ok(r)
        })
        .collect()
}

fn defended_run(
    spec: &DefenseSpec,
    corpus: &Corpus,
    queries: &QuerySet,
    k: usize,
    params: IndexParams,
    seed: u64,
) -> Result<DefendedRun> {
    match *spec {
        DefenseSpec::None => Ok(DefendedRun {
            results: build_index(corpus, params, seed)?.search_batch(queries, k)?,
            degenerate: 0,
            detection: None,
        }),
        DefenseSpec::CenteredL2 | DefenseSpec::ZScore => {
            let model = if *spec == DefenseSpec::CenteredL2 {
                fit_cl2(corpus)?
            } else {
                fit_zscore(corpus)?
            };
            let transformed = transform_corpus(&model, corpus)?;
            let index = build_index(&transformed.corpus, params, seed)?;
            let tq = queries
                .vectors()
                .map(|q| apply_stored(&model, q))
                .collect::<Result<Vec<_>>>()?;
            let degenerate = transformed.degenerate_ids.len() + tq.iter().filter(|t| t.degenerate).count();
            let vectors: Vec<Vec<f64>> = tq.into_iter().map(|t| t.vector).collect();
            Ok(DefendedRun {
                results: search_vectors(&index, queries, &vectors, k)?,
                degenerate,
                detection: None,
            })
        }
        DefenseSpec::Tcpr { kappa } => {
            let index = build_index(corpus, params, seed)?;
            let tq = queries
                .queries()
                .par_iter()
                .map(|q| apply_tcpr(&q.vector, &index, kappa))
                .collect::<Result<Vec<_>>>()?;
            let degenerate = tq.iter().filter(|t| t.degenerate).count();
            let vectors: Vec<Vec<f64>> = tq.into_iter().map(|t| t.vector).collect();
            Ok(DefendedRun {
                results: search_vectors(&index, queries, &vectors, k)?,
                degenerate,
                detection: None,
            })
        }
        DefenseSpec::Detection { clusters, k: probe_k } => {
            let dp = DetectionParams {
                k: probe_k,
                ..DetectionParams::new(clusters, seed)
            };
            let (outcome, filtered) = detect_and_filter(corpus, &dp)?;
            Ok(DefendedRun {
                results: build_index(&filtered, params, seed)?.search_batch(queries, k)?,
                degenerate: 0,
                detection: Some(DetectionSummary::new(corpus, &outcome)),
            })
        }
    }
}

pub fn evaluate_defense(
    spec: &DefenseSpec,
    clean: &Corpus,
    poisoned: &Corpus,
    queries: &QuerySet,
    k: usize,
    params: IndexParams,
    seed: u64,
) -> Result<DefenseEvaluation> {
    if clean.dim() != poisoned.dim() || clean.dim() != queries.dim() {
        return Err(Error::DimensionMismatch {
            expected: clean.dim(),
            actual: if clean.dim() != poisoned.dim() { poisoned.dim() } else { queries.dim() },
        });
    }
    let truth = brute_force_batch(clean, queries, k)?;
    let poison_ids = poisoned.injected_ids();

    let plain = build_index(poisoned, params, seed)?.search_batch(queries, k)?;
    let undefended =
        attack_metrics(&plain, &poison_ids, k)?.with_recall(recall_at_k(&plain, &truth, k)?);

    let attacked = defended_run(spec, poisoned, queries, k, params, seed)?;
    let defended = attack_metrics(&attacked.results, &poison_ids, k)?
        .with_recall(recall_at_k(&attacked.results, &truth, k)?);

    let utility = defended_run(spec, clean, queries, k, params, seed)?;
    let utility_recall = recall_at_k(&utility.results, &truth, k)?;

    Ok(DefenseEvaluation {
        defense: *spec,
        undefended,
        defended,
        utility_recall,
        degenerate_vectors: attacked.degenerate,
        detection: attacked.detection,
        utility_detection: utility.detection,
    })
}
