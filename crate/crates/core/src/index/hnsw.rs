use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::Rng;

use crate::rng::stream_rng;

use super::store::{PreparedQuery, VectorStore};
use super::{Hit, Ranked, TopK};

/// Layered proximity graph. Node `i` is the record at corpus position `i`.
pub(crate) struct HnswGraph {
    /// `links[i][layer]` are the neighbours of node `i` on that layer.
    links: Vec<Vec<Vec<u32>>>,
    entry: u32,
    top_layer: usize,
    m: usize,
}

impl HnswGraph {
    pub fn build(store: &VectorStore, m: usize, ef_construction: usize, seed: u64) -> Self {
        let n = store.len();
        let level_mult = 1.0 / (m as f64).ln();
        let mut rng = stream_rng(seed, 0);
        let mut graph = HnswGraph {
            links: Vec::with_capacity(n),
            entry: 0,
            top_layer: 0,
            m,
        };
        for pos in 0..n {
            let u: f64 = 1.0 - rng.random::<f64>();
            let level = (-u.ln() * level_mult).floor() as usize;
            graph.insert(store, pos, level, ef_construction);
        }
        graph
    }

    fn capacity(&self, layer: usize) -> usize {
        if layer == 0 {
            2 * self.m
        } else {
            self.m
        }
    }

    fn insert(&mut self, store: &VectorStore, pos: usize, level: usize, ef_construction: usize) {
        self.links.push(vec![Vec::new(); level + 1]);
        if pos == 0 {
            self.entry = 0;
            self.top_layer = level;
            return;
        }
        let q = store.prepare_stored(pos);
        let mut entry = store.ranked(&q, self.entry as usize);
        for layer in (level + 1..=self.top_layer).rev() {
            entry = self.greedy(store, &q, entry, layer);
        }
        let mut entries = vec![entry];
        for layer in (0..=level.min(self.top_layer)).rev() {
            let found = self.search_layer(store, &q, &entries, ef_construction, layer);
            let chosen: Vec<u32> = found.iter().take(self.m).map(|r| r.pos).collect();
            for &nb in &chosen {
                let nb = nb as usize;
                self.links[nb][layer].push(pos as u32);
                if self.links[nb][layer].len() > self.capacity(layer) {
                    self.shrink(store, nb, layer);
                }
            }
            self.links[pos][layer] = chosen;
            entries = found;
        }
        if level > self.top_layer {
            self.top_layer = level;
            self.entry = pos as u32;
        }
    }

    /// Keeps the nearest `capacity` neighbours of `node`.
    fn shrink(&mut self, store: &VectorStore, node: usize, layer: usize) {
        let q = store.prepare_stored(node);
        let mut ranked: Vec<Ranked> = self.links[node][layer]
            .iter()
            .map(|&p| store.ranked(&q, p as usize))
            .collect();
        ranked.sort_unstable();
        ranked.truncate(self.capacity(layer));
        self.links[node][layer] = ranked.into_iter().map(|r| r.pos).collect();
    }

    fn greedy(&self, store: &VectorStore, q: &PreparedQuery, mut best: Ranked, layer: usize) -> Ranked {
        loop {
            let mut improved = false;
            for &nb in &self.links[best.pos as usize][layer] {
                let r = store.ranked(q, nb as usize);
                if r < best {
                    best = r;
                    improved = true;
                }
            }
            if !improved {
                return best;
            }
        }
    }

    /// Beam search on one layer; returns up to `ef` candidates, nearest first.
    fn search_layer(
        &self,
        store: &VectorStore,
        q: &PreparedQuery,
        entries: &[Ranked],
        ef: usize,
        layer: usize,
    ) -> Vec<Ranked> {
        let mut visited = vec![false; self.links.len()];
        let mut candidates: BinaryHeap<Reverse<Ranked>> = BinaryHeap::new();
        let mut results: BinaryHeap<Ranked> = BinaryHeap::new();
        for &e in entries {
            if !visited[e.pos as usize] {
                visited[e.pos as usize] = true;
                candidates.push(Reverse(e));
                results.push(e);
            }
        }
        while results.len() > ef {
            results.pop();
        }
        while let Some(Reverse(current)) = candidates.pop() {
            if let Some(worst) = results.peek() {
                if results.len() >= ef && current > *worst {
                    break;
                }
            }
            for &nb in &self.links[current.pos as usize][layer] {
                let nb = nb as usize;
                if visited[nb] {
                    continue;
                }
                visited[nb] = true;
                let r = store.ranked(q, nb);
                let admit = results.len() < ef || results.peek().is_some_and(|w| r < *w);
                if admit {
                    candidates.push(Reverse(r));
                    results.push(r);
                    if results.len() > ef {
                        results.pop();
                    }
                }
            }
        }
        results.into_sorted_vec()
    }

    pub fn search(&self, store: &VectorStore, q: &PreparedQuery, k: usize, ef_search: usize) -> Vec<Hit> {
        let mut entry = store.ranked(q, self.entry as usize);
        for layer in (1..=self.top_layer).rev() {
            entry = self.greedy(store, q, entry, layer);
        }
        let found = self.search_layer(store, q, &[entry], ef_search.max(k), 0);
        let mut top = TopK::new(k);
        for r in found {
            top.push(r);
        }
        top.into_hits()
    }
}
