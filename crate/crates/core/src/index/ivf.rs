use crate::clustering::{kmeans, KMeansParams};
use crate::corpus::Corpus;
use crate::error::Result;
use crate::geometry::distance;

use super::store::{PreparedQuery, VectorStore};
use super::{Hit, TopK};

/// Inverted lists over k-means coarse centroids.
pub(crate) struct IvfLists {
    centroids: Vec<Vec<f64>>,
    lists: Vec<Vec<u32>>,
}

impl IvfLists {
    pub fn train(corpus: &Corpus, nlist: usize, seed: u64) -> Result<Self> {
        let clustering = kmeans(corpus, &KMeansParams::new(nlist, seed))?;
        let lists = clustering
            .members()
            .into_iter()
            .map(|m| m.into_iter().map(|p| p as u32).collect())
            .collect();
        Ok(IvfLists {
            centroids: clustering.centroids,
            lists,
        })
    }

    pub fn search(&self, store: &VectorStore, q: &PreparedQuery, k: usize, nprobe: usize) -> Vec<Hit> {
        let metric = store.metric();
        let mut order: Vec<(f64, usize)> = self
            .centroids
            .iter()
            .enumerate()
            .map(|(j, c)| {
                // a cosine centroid can only be zero if its members cancel out
                let d = distance(&q.vector, c, metric).unwrap_or(f64::INFINITY);
                (d, j)
            })
            .collect();
        order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut top = TopK::new(k);
        for &(_, j) in order.iter().take(nprobe.min(self.lists.len())) {
            for &pos in &self.lists[j] {
                top.push(store.ranked(q, pos as usize));
            }
        }
        top.into_hits()
    }
}
