//! Retrieval and attack metrics, distance-to-centroid CDFs and hubness
//! probabilities.

mod cdf;
mod hubness;

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::SearchResult;

pub use cdf::{centroid_distances, distance_to_centroid_cdf, CdfPoint, CentroidScope, EmpiricalCdf};
pub use hubness::{
    hubness_grid, hubness_probability, GridSpectrum, HubnessEntry, HubnessReport, HubnessSweep,
    Population, ScopeKind,
};

/// Mean over queries of `|ANN_K ∩ GT_K| / K`.
pub fn recall_at_k(ann: &[SearchResult], truth: &[SearchResult], k: usize) -> Result<f64> {
    if ann.len() != truth.len() {
        return Err(Error::invalid(format!(
            "recall needs aligned result lists ({} vs {})",
            ann.len(),
            truth.len()
        )));
    }
    if ann.is_empty() {
        return Err(Error::Empty("result lists"));
    }
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    let total: f64 = ann
        .iter()
        .zip(truth)
        .map(|(a, t)| {
            let gt: HashSet<u64> = t.ids().take(k).collect();
            a.ids().take(k).filter(|id| gt.contains(id)).count() as f64 / k as f64
        })
        .sum();
    Ok(total / ann.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryOutcome {
    /// Injected records among the top K.
    pub malicious: usize,
    /// 1-based rank of the first injected record, 0 when there is none.
    pub first_poisoned_rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub k: usize,
    /// Filled in when a ground truth is available.
    pub recall_at_k: Option<f64>,
    pub mo_at_k: f64,
    pub asr: f64,
    /// Mean first-poisoned rank over affected queries; absent when no query
    /// was affected.
    pub mean_fpr: Option<f64>,
    pub per_query: Vec<QueryOutcome>,
}

impl MetricsReport {
    pub fn with_recall(mut self, recall: f64) -> Self {
        self.recall_at_k = Some(recall);
        self
    }
}

/// MO@K, ASR and mean FPR of a result batch against a set of injected ids.
pub fn attack_metrics(
    results: &[SearchResult],
    poison_ids: &BTreeSet<u64>,
    k: usize,
) -> Result<MetricsReport> {
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    if results.is_empty() {
        return Err(Error::Empty("result lists"));
    }
    let mut per_query = Vec::with_capacity(results.len());
    for (i, r) in results.iter().enumerate() {
        if r.hits.len() > k {
            return Err(Error::invalid(format!(
                "result {i} has {} hits, more than K={k}",
                r.hits.len()
            )));
        }
        let malicious = r.ids().filter(|id| poison_ids.contains(id)).count();
        let first_poisoned_rank = r
            .ids()
            .position(|id| poison_ids.contains(&id))
            .map_or(0, |p| p + 1);
        per_query.push(QueryOutcome {
            malicious,
            first_poisoned_rank,
        });
    }
    let nq = per_query.len() as f64;
    let total: usize = per_query.iter().map(|q| q.malicious).sum();
    let mo_at_k = total as f64 / (k as f64 * nq);
    let affected: Vec<usize> = per_query
        .iter()
        .filter(|q| q.first_poisoned_rank > 0)
        .map(|q| q.first_poisoned_rank)
        .collect();
    let asr = affected.len() as f64 / nq;
    let mean_fpr = (!affected.is_empty())
        .then(|| affected.iter().sum::<usize>() as f64 / affected.len() as f64);
    Ok(MetricsReport {
        k,
        recall_at_k: None,
        mo_at_k,
        asr,
        mean_fpr,
        per_query,
    })
}

/// Keeps only the first `k` hits of every result.
pub fn truncate_results(results: &[SearchResult], k: usize) -> Vec<SearchResult> {
    results
        .iter()
        .map(|r| SearchResult {
            query_id: r.query_id,
            hits: r.hits.iter().take(k).copied().collect(),
        })
        .collect()
}
