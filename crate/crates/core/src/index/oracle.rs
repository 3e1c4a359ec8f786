use rayon::prelude::*;

use crate::corpus::{Corpus, QuerySet};
use crate::error::{Error, Result};
use crate::geometry::{distance, DistanceMetric, Scalar};

use super::{Hit, SearchResult};

/// Exact top-K by scanning every record and partially sorting; shares no code
/// with the index structures beyond the distance kernel.
pub fn brute_force_oracle<T: Scalar>(
    corpus: &Corpus,
    query: &[T],
    k: usize,
    metric: DistanceMetric,
) -> Result<SearchResult> {
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    let mut all = corpus
        .records()
        .iter()
        .map(|r| Ok((distance(query, &r.vector, metric)?, r.id)))
        .collect::<Result<Vec<(f64, u64)>>>()?;
    let order = |a: &(f64, u64), b: &(f64, u64)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < all.len() {
        all.select_nth_unstable_by(k - 1, order);
        all.truncate(k);
    }
    all.sort_unstable_by(order);
    Ok(SearchResult {
        query_id: None,
        hits: all
            .into_iter()
            .map(|(distance, id)| Hit { id, distance })
            .collect(),
    })
}

/// Oracle results for every query under the corpus metric.
pub fn brute_force_batch(corpus: &Corpus, queries: &QuerySet, k: usize) -> Result<Vec<SearchResult>> {
    queries
        .queries()
        .par_iter()
        .map(|q| {
            let mut r = brute_force_oracle(corpus, &q.vector, k, corpus.metric())?;
            r.query_id = q.id;
            Ok(r)
        })
        .collect()
}
