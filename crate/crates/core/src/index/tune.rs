use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, QuerySet};
use crate::error::{Error, Result};
use crate::evaluation::recall_at_k;

use super::{
    brute_force_batch, build_index, default_nlist, IndexKind, IndexParams, DEFAULT_EF_CONSTRUCTION,
    DEFAULT_HNSW_M,
};

/// Parameter ladders walked by [`tune_to_recall`], cheapest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuneSchedule {
    /// `None` means `ceil(sqrt(n))`.
    pub nlist: Option<usize>,
    /// `None` means powers of two below nlist, then nlist itself.
    pub nprobe: Option<Vec<usize>>,
    pub m: usize,
    pub ef_construction: usize,
    /// `None` means doubling from 10, capped at the corpus size.
    pub ef_search: Option<Vec<usize>>,
}

impl Default for TuneSchedule {
    fn default() -> Self {
        TuneSchedule {
            nlist: None,
            nprobe: None,
            m: DEFAULT_HNSW_M,
            ef_construction: DEFAULT_EF_CONSTRUCTION,
            ef_search: None,
        }
    }
}

fn doubling(start: usize, cap: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut v = start.max(1);
    while v < cap {
        out.push(v);
        v *= 2;
    }
    out.push(cap);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneStep {
    pub params: IndexParams,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneOutcome {
    pub params: IndexParams,
    pub recall: f64,
    /// Every schedule point measured, in order.
    pub trace: Vec<TuneStep>,
}

pub fn tune_to_recall(
    corpus: &Corpus,
    kind: IndexKind,
    queries: &QuerySet,
    k: usize,
    target: f64,
    seed: u64,
) -> Result<TuneOutcome> {
    tune_to_recall_with(corpus, kind, queries, k, target, seed, &TuneSchedule::default())
}

/// Returns the first schedule point whose R@K against the exact oracle is at
/// least `target`. The index is built once; only the probe width varies.
pub fn tune_to_recall_with(
    corpus: &Corpus,
    kind: IndexKind,
    queries: &QuerySet,
    k: usize,
    target: f64,
    seed: u64,
    schedule: &TuneSchedule,
) -> Result<TuneOutcome> {
    if !(target > 0.0) {
        return Err(Error::invalid(format!("recall target {target} must be positive")));
    }
    if queries.is_empty() {
        return Err(Error::Empty("tuning queries"));
    }
    let n = corpus.len();
    let (base, probes) = match kind {
        IndexKind::Flat => {
            return if target <= 1.0 {
                let step = TuneStep {
                    params: IndexParams::Flat,
                    recall: 1.0,
                };
                Ok(TuneOutcome {
                    params: step.params,
                    recall: 1.0,
                    trace: vec![step],
                })
            } else {
                Err(Error::TargetUnreachable {
                    target,
                    best: 1.0,
                    best_params: IndexParams::Flat.to_string(),
                })
            };
        }
        IndexKind::IvfFlat => {
            let nlist = schedule.nlist.unwrap_or_else(|| default_nlist(n));
            let probes = schedule
                .nprobe
                .clone()
                .unwrap_or_else(|| doubling(1, nlist));
            (IndexParams::IvfFlat { nlist, nprobe: nlist }, probes)
        }
        IndexKind::Hnsw => {
            let probes = schedule
                .ef_search
                .clone()
                .unwrap_or_else(|| doubling(10, n));
            (
                IndexParams::Hnsw {
                    m: schedule.m,
                    ef_construction: schedule.ef_construction,
                    ef_search: 1,
                },
                probes,
            )
        }
    };
    if probes.is_empty() || probes.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("tuning schedule must be nonempty and ascending"));
    }
    let truth = brute_force_batch(corpus, queries, k)?;
    let index = build_index(corpus, base, seed)?;
    let mut trace = Vec::with_capacity(probes.len());
    for probe in probes {
        let params = with_probe(base, probe);
        params.validate(n)?;
        let results = index.search_batch_probing(queries, k, Some(probe))?;
        let recall = recall_at_k(&results, &truth, k)?;
        log::debug!("tune {params}: R@{k} = {recall:.4}");
        trace.push(TuneStep { params, recall });
        if recall >= target {
            return Ok(TuneOutcome {
                params,
                recall,
                trace,
            });
        }
    }
    let best = trace
        .iter()
        .max_by(|a, b| a.recall.total_cmp(&b.recall))
        .expect("nonempty schedule");
    Err(Error::TargetUnreachable {
        target,
        best: best.recall,
        best_params: best.params.to_string(),
    })
}

fn with_probe(params: IndexParams, probe: usize) -> IndexParams {
    match params {
        IndexParams::IvfFlat { nlist, .. } => IndexParams::IvfFlat { nlist, nprobe: probe },
        IndexParams::Hnsw {
            m, ef_construction, ..
        } => IndexParams::Hnsw {
            m,
            ef_construction,
            ef_search: probe,
        },
        IndexParams::Flat => IndexParams::Flat,
    }
}
