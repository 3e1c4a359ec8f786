//! Top-K search: exact Flat scan, IVF-Flat and HNSW.
//!
//! All three rank candidates by `(distance, record id)`, so ties resolve the
//! same way everywhere. Distances are reported in metric units and computed by
//! the same kernels as [`crate::geometry::distance`].

mod hnsw;
mod ivf;
mod oracle;
mod store;
mod tune;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, QuerySet};
use crate::error::{Error, Result};
use crate::geometry::{DistanceMetric, Scalar};

pub use oracle::{brute_force_oracle, brute_force_batch};
pub use tune::{tune_to_recall, tune_to_recall_with, TuneOutcome, TuneSchedule, TuneStep};

use hnsw::HnswGraph;
use ivf::IvfLists;
use store::{PreparedQuery, VectorStore};

pub const DEFAULT_HNSW_M: usize = 16;
pub const DEFAULT_EF_CONSTRUCTION: usize = 100;
pub const DEFAULT_EF_SEARCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexKind {
    Flat,
    IvfFlat,
    Hnsw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IndexParams {
    Flat,
    IvfFlat {
        nlist: usize,
        nprobe: usize,
    },
    Hnsw {
        m: usize,
        ef_construction: usize,
        ef_search: usize,
    },
}

impl IndexParams {
    pub fn kind(&self) -> IndexKind {
        match self {
            IndexParams::Flat => IndexKind::Flat,
            IndexParams::IvfFlat { .. } => IndexKind::IvfFlat,
            IndexParams::Hnsw { .. } => IndexKind::Hnsw,
        }
    }

    /// `nlist = ceil(sqrt(n))`, probing every list.
    pub fn ivf_default(n: usize) -> Self {
        let nlist = default_nlist(n);
        IndexParams::IvfFlat {
            nlist,
            nprobe: nlist,
        }
    }

    pub fn hnsw_default() -> Self {
        IndexParams::Hnsw {
            m: DEFAULT_HNSW_M,
            ef_construction: DEFAULT_EF_CONSTRUCTION,
            ef_search: DEFAULT_EF_SEARCH,
        }
    }

    pub fn validate(&self, corpus_len: usize) -> Result<()> {
        match *self {
            IndexParams::Flat => Ok(()),
            IndexParams::IvfFlat { nlist, nprobe } => {
                if nprobe >= 1 && nprobe <= nlist && nlist <= corpus_len {
                    Ok(())
                } else {
                    Err(Error::invalid(format!(
                        "IVF-Flat needs 1 <= nprobe ({nprobe}) <= nlist ({nlist}) <= corpus size ({corpus_len})"
                    )))
                }
            }
            IndexParams::Hnsw {
                m,
                ef_construction,
                ef_search,
            } => {
                if m >= 2 && ef_construction >= m && ef_search >= 1 {
                    Ok(())
                } else {
                    Err(Error::invalid(format!(
                        "HNSW needs m >= 2, ef_construction >= m, ef_search >= 1 (got {m}, {ef_construction}, {ef_search})"
                    )))
                }
            }
        }
    }
}

impl std::fmt::Display for IndexParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IndexParams::Flat => write!(f, "flat"),
            IndexParams::IvfFlat { nlist, nprobe } => write!(f, "ivf_flat(nlist={nlist}, nprobe={nprobe})"),
            IndexParams::Hnsw {
                m,
                ef_construction,
                ef_search,
            } => write!(f, "hnsw(m={m}, ef_construction={ef_construction}, ef_search={ef_search})"),
        }
    }
}

pub fn default_nlist(n: usize) -> usize {
    ((n as f64).sqrt().ceil() as usize).clamp(1, n.max(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub id: u64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub query_id: Option<u64>,
    pub hits: Vec<Hit>,
}

impl SearchResult {
    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.hits.iter().map(|h| h.id)
    }
}

/// Candidate ordered by `(distance, id)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Ranked {
    pub distance: f64,
    pub id: u64,
    pub pos: u32,
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked {}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.id.cmp(&other.id))
    }
}

/// Keeps the `k` smallest candidates seen.
pub(crate) struct TopK {
    k: usize,
    heap: BinaryHeap<Ranked>,
}

impl TopK {
    pub fn new(k: usize) -> Self {
        TopK {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    #[inline]
    pub fn push(&mut self, r: Ranked) {
        if self.heap.len() < self.k {
            self.heap.push(r);
        } else if let Some(top) = self.heap.peek() {
            if r < *top {
                self.heap.pop();
                self.heap.push(r);
            }
        }
    }

    pub fn into_hits(self) -> Vec<Hit> {
        self.heap
            .into_sorted_vec()
            .into_iter()
            .map(|r| Hit {
                id: r.id,
                distance: r.distance,
            })
            .collect()
    }
}

enum Structure {
    Flat,
    Ivf(IvfLists),
    Hnsw(HnswGraph),
}

/// A built, immutable index. Owns a copy of the corpus vectors.
pub struct IndexHandle {
    params: IndexParams,
    seed: u64,
    store: VectorStore,
    structure: Structure,
}

pub fn build_index(corpus: &Corpus, params: IndexParams, seed: u64) -> Result<IndexHandle> {
    if corpus.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    params.validate(corpus.len())?;
    let store = VectorStore::new(corpus)?;
    let structure = match params {
        IndexParams::Flat => Structure::Flat,
        IndexParams::IvfFlat { nlist, .. } => Structure::Ivf(IvfLists::train(corpus, nlist, seed)?),
        IndexParams::Hnsw {
            m, ef_construction, ..
        } => Structure::Hnsw(HnswGraph::build(&store, m, ef_construction, seed)),
    };
    Ok(IndexHandle {
        params,
        seed,
        store,
        structure,
    })
}

impl IndexHandle {
    pub fn params(&self) -> IndexParams {
        self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn metric(&self) -> DistanceMetric {
        self.store.metric()
    }

    pub fn dim(&self) -> usize {
        self.store.dim()
    }

    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.store.len() == 0
    }

    /// Stored vector of the record at corpus position `pos`.
    pub fn vector(&self, pos: usize) -> &[f32] {
        self.store.vector(pos)
    }

    /// Corpus position of a record id.
    pub fn position_of(&self, id: u64) -> Option<usize> {
        self.store.position_of(id)
    }

    pub fn search<T: Scalar>(&self, query: &[T], k: usize) -> Result<SearchResult> {
        self.search_probing(query, k, None)
    }

    /// Searches with the probe width (nprobe or ef_search) replaced by `probe`.
    pub(crate) fn search_probing<T: Scalar>(
        &self,
        query: &[T],
        k: usize,
        probe: Option<usize>,
    ) -> Result<SearchResult> {
        if k == 0 {
            return Err(Error::invalid("K must be at least 1"));
        }
        let q = self.store.prepare(query)?;
        let hits = match (&self.structure, self.params) {
            (Structure::Flat, _) => self.flat_scan(&q, k),
            (Structure::Ivf(lists), IndexParams::IvfFlat { nprobe, .. }) => {
                lists.search(&self.store, &q, k, probe.unwrap_or(nprobe))
            }
            (Structure::Hnsw(graph), IndexParams::Hnsw { ef_search, .. }) => {
                graph.search(&self.store, &q, k, probe.unwrap_or(ef_search))
            }
            _ => unreachable!("structure always matches params"),
        };
        Ok(SearchResult {
            query_id: None,
            hits,
        })
    }

    fn flat_scan(&self, q: &PreparedQuery, k: usize) -> Vec<Hit> {
        let mut top = TopK::new(k);
        for pos in 0..self.store.len() {
            top.push(self.store.ranked(q, pos));
        }
        top.into_hits()
    }

    /// Searches every query, in parallel, keeping query order.
    pub fn search_batch(&self, queries: &QuerySet, k: usize) -> Result<Vec<SearchResult>> {
        self.search_batch_probing(queries, k, None)
    }

    pub(crate) fn search_batch_probing(
        &self,
        queries: &QuerySet,
        k: usize,
        probe: Option<usize>,
    ) -> Result<Vec<SearchResult>> {
        queries
            .queries()
            .par_iter()
            .map(|q| {
                let mut r = self.search_probing(&q.vector, k, probe)?;
                r.query_id = q.id;
                Ok(r)
            })
            .collect()
    }
}
