use std::collections::HashMap;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::geometry::{cosine_from_parts, dot, norm, squared_euclidean, DistanceMetric, Scalar};

use super::Ranked;

/// Contiguous copy of the corpus vectors, with cached norms under cosine.
pub(crate) struct VectorStore {
    dim: usize,
    metric: DistanceMetric,
    data: Vec<f32>,
    ids: Vec<u64>,
    norms: Vec<f64>,
    positions: HashMap<u64, usize>,
}

pub(crate) struct PreparedQuery {
    pub vector: Vec<f64>,
    norm: f64,
}

impl VectorStore {
    pub fn new(corpus: &Corpus) -> Result<Self> {
        let dim = corpus.dim();
        let mut data = Vec::with_capacity(corpus.len() * dim);
        for v in corpus.vectors() {
            data.extend_from_slice(v);
        }
        let norms = match corpus.metric() {
            DistanceMetric::Euclidean => Vec::new(),
            DistanceMetric::Cosine => {
                let norms: Vec<f64> = data.chunks(dim).map(norm).collect();
                if norms.contains(&0.0) {
                    return Err(Error::ZeroVector);
                }
                norms
            }
        };
        let ids: Vec<u64> = corpus.ids().collect();
        let positions = ids.iter().enumerate().map(|(p, &id)| (id, p)).collect();
        Ok(VectorStore {
            dim,
            metric: corpus.metric(),
            data,
            ids,
            norms,
            positions,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> DistanceMetric {
        self.metric
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn position_of(&self, id: u64) -> Option<usize> {
        self.positions.get(&id).copied()
    }

    #[inline]
    pub fn vector(&self, pos: usize) -> &[f32] {
        &self.data[pos * self.dim..(pos + 1) * self.dim]
    }

    pub fn prepare<T: Scalar>(&self, query: &[T]) -> Result<PreparedQuery> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: query.len(),
            });
        }
        let vector: Vec<f64> = query.iter().map(|x| x.widen()).collect();
        if let Some(pos) = vector.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        let norm = norm(&vector);
        if self.metric == DistanceMetric::Cosine && norm == 0.0 {
            return Err(Error::ZeroVector);
        }
        Ok(PreparedQuery { vector, norm })
    }

    /// The stored vector at `pos` as a query.
    pub fn prepare_stored(&self, pos: usize) -> PreparedQuery {
        let vector: Vec<f64> = self.vector(pos).iter().map(|x| x.widen()).collect();
        let norm = match self.metric {
            DistanceMetric::Cosine => self.norms[pos],
            DistanceMetric::Euclidean => 0.0,
        };
        PreparedQuery { vector, norm }
    }

    #[inline]
    pub fn distance(&self, q: &PreparedQuery, pos: usize) -> f64 {
        let x = self.vector(pos);
        match self.metric {
            DistanceMetric::Euclidean => squared_euclidean(&q.vector, x).sqrt(),
            DistanceMetric::Cosine => cosine_from_parts(dot(&q.vector, x), q.norm, self.norms[pos]),
        }
    }

    #[inline]
    pub fn ranked(&self, q: &PreparedQuery, pos: usize) -> Ranked {
        Ranked {
            distance: self.distance(q, pos),
            id: self.ids[pos],
            pos: pos as u32,
        }
    }
}
