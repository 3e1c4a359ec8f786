use blackhole_core::corpus::{Corpus, QuerySet};
use blackhole_core::evaluation::recall_at_k;
use blackhole_core::index::{
    brute_force_batch, brute_force_oracle, build_index, tune_to_recall, tune_to_recall_with,
    IndexKind, IndexParams, SearchResult, TuneSchedule,
};
use blackhole_core::synthgen::{sample_gaussian_corpus, sample_gaussian_queries, Basis, SpectrumSpec};
use blackhole_core::{DistanceMetric, Error};
use proptest::prelude::*;

fn gaussian(n: usize, d: usize, seed: u64, metric: DistanceMetric) -> Corpus {
    let spec = SpectrumSpec::power_law(d, 1.0, 0.3).unwrap();
    sample_gaussian_corpus(&spec, n, seed, Basis::Axis)
        .unwrap()
        .with_metric(metric)
}

fn queries(n: usize, d: usize, seed: u64) -> QuerySet {
    let spec = SpectrumSpec::power_law(d, 1.0, 0.3).unwrap();
    sample_gaussian_queries(&spec, n, seed, Basis::Axis).unwrap()
}

fn assert_well_formed(r: &SearchResult, k: usize) {
    assert!(r.hits.len() <= k);
    for w in r.hits.windows(2) {
        assert!(w[0].distance <= w[1].distance);
    }
    let mut ids: Vec<u64> = r.ids().collect();
    ids.sort_unstable();
    ids.dedup();
    assert_eq!(ids.len(), r.hits.len());
}

/// Plain O(nK) selection: repeatedly take the smallest remaining (distance, id).
fn selection_top_k(corpus: &Corpus, q: &[f32], k: usize) -> Vec<u64> {
    let mut taken = vec![false; corpus.len()];
    let mut out = Vec::new();
    for _ in 0..k.min(corpus.len()) {
        let mut best: Option<(f64, u64, usize)> = None;
        for (p, r) in corpus.records().iter().enumerate() {
            if taken[p] {
                continue;
            }
            let d = blackhole_core::geometry::distance(q, &r.vector, corpus.metric()).unwrap();
            if best.is_none_or(|(bd, bid, _)| d < bd || (d == bd && r.id < bid)) {
                best = Some((d, r.id, p));
            }
        }
        let (_, id, p) = best.unwrap();
        taken[p] = true;
        out.push(id);
    }
    out
}

#[test]
fn flat_self_query_is_distance_zero() {
    let c = gaussian(300, 8, 1, DistanceMetric::Euclidean);
    let idx = build_index(&c, IndexParams::Flat, 0).unwrap();
    let r = idx.search(c.vector(42), 1).unwrap();
    assert_eq!(r.hits[0].id, c.records()[42].id);
    assert_eq!(r.hits[0].distance, 0.0);
}

#[test]
fn flat_large_k_returns_everything_sorted() {
    let c = gaussian(50, 4, 2, DistanceMetric::Cosine);
    let idx = build_index(&c, IndexParams::Flat, 0).unwrap();
    let r = idx.search(&[1.0f32, 0.0, 0.0, 0.0], 80).unwrap();
    assert_eq!(r.hits.len(), 50);
    assert_well_formed(&r, 80);
}

#[test]
fn search_rejects_bad_input() {
    let c = gaussian(20, 4, 3, DistanceMetric::Euclidean);
    let idx = build_index(&c, IndexParams::Flat, 0).unwrap();
    assert!(matches!(idx.search(&[0.0f32; 3], 1), Err(Error::DimensionMismatch { .. })));
    assert!(idx.search(&[0.0f32; 4], 0).is_err());
}

#[test]
fn invalid_params_are_rejected() {
    let c = gaussian(20, 4, 3, DistanceMetric::Euclidean);
    for p in [
        IndexParams::IvfFlat { nlist: 4, nprobe: 5 },
        IndexParams::IvfFlat { nlist: 21, nprobe: 1 },
        IndexParams::IvfFlat { nlist: 4, nprobe: 0 },
        IndexParams::Hnsw { m: 1, ef_construction: 10, ef_search: 10 },
        IndexParams::Hnsw { m: 8, ef_construction: 4, ef_search: 10 },
        IndexParams::Hnsw { m: 8, ef_construction: 16, ef_search: 0 },
    ] {
        assert!(build_index(&c, p, 0).is_err(), "{p} accepted");
    }
    let empty = Corpus::new(4, DistanceMetric::Euclidean, vec![]).unwrap();
    assert!(build_index(&empty, IndexParams::Flat, 0).is_err());
}

#[test]
fn oracle_singleton_and_tie_break() {
    let c = Corpus::from_vectors(vec![vec![1.0f32, 2.0]], DistanceMetric::Euclidean).unwrap();
    let r = brute_force_oracle(&c, &[0.0f32, 0.0], 5, DistanceMetric::Euclidean).unwrap();
    assert_eq!(r.ids().collect::<Vec<_>>(), vec![0]);

    use blackhole_core::corpus::{Provenance, Record};
    let rec = |id, v: Vec<f32>| Record {
        id,
        vector: v,
        content: None,
        provenance: Provenance::Benign,
    };
    let c = Corpus::new(
        2,
        DistanceMetric::Euclidean,
        vec![rec(7, vec![1.0, 0.0]), rec(1, vec![0.0, 0.0]), rec(3, vec![1.0, 0.0])],
    )
    .unwrap();
    let r = brute_force_oracle(&c, &[0.0f32, 0.0], 2, DistanceMetric::Euclidean).unwrap();
    assert_eq!(r.ids().collect::<Vec<_>>(), vec![1, 3]);
    let idx = build_index(&c, IndexParams::Flat, 0).unwrap();
    assert_eq!(idx.search(&[0.0f32, 0.0], 2).unwrap(), r);
}

#[test]
fn oracle_matches_selection_scan() {
    for metric in [DistanceMetric::Euclidean, DistanceMetric::Cosine] {
        let c = gaussian(500, 16, 4, metric);
        let qs = queries(20, 16, 5);
        for q in qs.vectors() {
            let r = brute_force_oracle(&c, q, 10, metric).unwrap();
            assert_eq!(r.ids().collect::<Vec<_>>(), selection_top_k(&c, q, 10));
        }
    }
}

#[test]
fn flat_matches_oracle_on_random_queries() {
    for metric in [DistanceMetric::Euclidean, DistanceMetric::Cosine] {
        let c = gaussian(2000, 32, 6, metric);
        let qs = queries(50, 32, 7);
        let idx = build_index(&c, IndexParams::Flat, 0).unwrap();
        let got = idx.search_batch(&qs, 10).unwrap();
        let want = brute_force_batch(&c, &qs, 10).unwrap();
        assert_eq!(got, want);
    }
}

#[test]
fn ivf_single_list_equals_flat() {
    let c = gaussian(1000, 16, 8, DistanceMetric::Euclidean);
    let qs = queries(30, 16, 9);
    let flat = build_index(&c, IndexParams::Flat, 0).unwrap().search_batch(&qs, 10).unwrap();
    let ivf = build_index(&c, IndexParams::IvfFlat { nlist: 1, nprobe: 1 }, 0).unwrap();
    assert_eq!(ivf.search_batch(&qs, 10).unwrap(), flat);
}

#[test]
fn ivf_full_probe_equals_flat() {
    for metric in [DistanceMetric::Euclidean, DistanceMetric::Cosine] {
        let c = gaussian(2000, 16, 10, metric);
        let qs = queries(40, 16, 11);
        let flat = build_index(&c, IndexParams::Flat, 0).unwrap().search_batch(&qs, 10).unwrap();
        let ivf = build_index(&c, IndexParams::IvfFlat { nlist: 32, nprobe: 32 }, 3).unwrap();
        assert_eq!(ivf.search_batch(&qs, 10).unwrap(), flat);
    }
}

#[test]
fn hnsw_exhaustive_ef_is_near_exact() {
    let c = gaussian(1000, 24, 12, DistanceMetric::Euclidean);
    let qs = queries(100, 24, 13);
    let truth = brute_force_batch(&c, &qs, 10).unwrap();
    let hnsw = build_index(
        &c,
        IndexParams::Hnsw { m: 16, ef_construction: 100, ef_search: 1000 },
        4,
    )
    .unwrap();
    let got = hnsw.search_batch(&qs, 10).unwrap();
    let exact = got
        .iter()
        .zip(&truth)
        .filter(|(a, b)| a.ids().collect::<Vec<_>>() == b.ids().collect::<Vec<_>>())
        .count();
    assert!(exact >= 99, "{exact}/100 exact");
    for r in &got {
        assert_well_formed(r, 10);
    }
}

#[test]
fn builds_are_deterministic() {
    let c = gaussian(1500, 16, 14, DistanceMetric::Cosine);
    let qs = queries(20, 16, 15);
    for p in [
        IndexParams::IvfFlat { nlist: 20, nprobe: 3 },
        IndexParams::Hnsw { m: 8, ef_construction: 40, ef_search: 20 },
    ] {
        let a = build_index(&c, p, 99).unwrap().search_batch(&qs, 10).unwrap();
        let b = build_index(&c, p, 99).unwrap().search_batch(&qs, 10).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn tune_flat_is_trivial() {
    let c = gaussian(200, 8, 16, DistanceMetric::Euclidean);
    let qs = queries(10, 8, 17);
    let out = tune_to_recall(&c, IndexKind::Flat, &qs, 10, 0.9, 0).unwrap();
    assert_eq!(out.params, IndexParams::Flat);
    assert_eq!(out.recall, 1.0);
}

#[test]
fn tune_ivf_hits_target_and_is_monotone() {
    let c = gaussian(10_000, 32, 18, DistanceMetric::Euclidean);
    let qs = queries(100, 32, 19);
    let out = tune_to_recall(&c, IndexKind::IvfFlat, &qs, 10, 0.9, 5).unwrap();
    assert!((0.9..=1.0).contains(&out.recall), "{}", out.recall);

    let idx = build_index(&c, out.params, 5).unwrap();
    let truth = brute_force_batch(&c, &qs, 10).unwrap();
    let measured = recall_at_k(&idx.search_batch(&qs, 10).unwrap(), &truth, 10).unwrap();
    assert_eq!(measured, out.recall);

    let IndexParams::IvfFlat { nlist, .. } = out.params else {
        panic!("wrong kind")
    };
    let schedule = TuneSchedule {
        nlist: Some(nlist),
        nprobe: Some((1..=nlist).step_by(7).collect()),
        ..TuneSchedule::default()
    };
    match tune_to_recall_with(&c, IndexKind::IvfFlat, &qs, 10, 1.01, 5, &schedule) {
        Err(Error::TargetUnreachable { best, .. }) => assert!(best <= 1.0),
        other => panic!("expected unreachable, got {other:?}"),
    }
    let full = tune_to_recall_with(&c, IndexKind::IvfFlat, &qs, 10, 1.0, 5, &schedule).unwrap();
    for w in full.trace.windows(2) {
        assert!(w[0].recall <= w[1].recall, "{:?}", full.trace);
    }
}

#[test]
fn hnsw_recall_grows_with_ef_search() {
    let c = gaussian(3000, 32, 20, DistanceMetric::Cosine);
    let qs = queries(100, 32, 21);
    let truth = brute_force_batch(&c, &qs, 10).unwrap();
    let recalls: Vec<f64> = [10, 20, 40, 80, 160, 320]
        .into_iter()
        .map(|ef_search| {
            let p = IndexParams::Hnsw { m: 4, ef_construction: 8, ef_search };
            let idx = build_index(&c, p, 6).unwrap();
            recall_at_k(&idx.search_batch(&qs, 10).unwrap(), &truth, 10).unwrap()
        })
        .collect();
    for w in recalls.windows(2) {
        assert!(w[0] <= w[1], "{recalls:?}");
    }

    let schedule = TuneSchedule {
        m: 4,
        ef_construction: 8,
        ef_search: Some(vec![10, 20, 40, 80, 160, 320]),
        ..TuneSchedule::default()
    };
    let out = tune_to_recall_with(&c, IndexKind::Hnsw, &qs, 10, recalls[3], 6, &schedule).unwrap();
    let first = recalls.iter().position(|&r| r >= recalls[3]).unwrap();
    assert_eq!(out.recall, recalls[first]);
    assert_eq!(out.trace.len(), first + 1);
}

#[test]
fn tune_unreachable_names_best() {
    let c = gaussian(200, 8, 22, DistanceMetric::Euclidean);
    let qs = queries(10, 8, 23);
    for kind in [IndexKind::Flat, IndexKind::IvfFlat] {
        match tune_to_recall(&c, kind, &qs, 10, 1.01, 0) {
            Err(Error::TargetUnreachable { best, .. }) => assert_eq!(best, 1.0),
            other => panic!("{other:?}"),
        }
    }
    assert!(tune_to_recall(&c, IndexKind::Flat, &qs, 10, 0.0, 0).is_err());
}

fn corpus_strategy() -> impl Strategy<Value = (Vec<Vec<f32>>, Vec<Vec<f32>>)> {
    (1usize..6).prop_flat_map(|d| {
        // a small value alphabet makes duplicate vectors and tied distances common
        let cell = prop::sample::select(vec![-2.0f32, -1.0, 0.0, 0.5, 1.0, 3.0]);
        (
            prop::collection::vec(prop::collection::vec(cell.clone(), d), 1..80),
            prop::collection::vec(prop::collection::vec(cell, d), 1..5),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flat_equals_oracle_everywhere((points, qs) in corpus_strategy(), k in 1usize..12, cosine: bool) {
        let metric = if cosine { DistanceMetric::Cosine } else { DistanceMetric::Euclidean };
        let points: Vec<Vec<f32>> = if cosine {
            points.into_iter().filter(|p| p.iter().any(|x| *x != 0.0)).collect()
        } else {
            points
        };
        prop_assume!(!points.is_empty());
        let c = Corpus::from_vectors(points, metric).unwrap();
        let idx = build_index(&c, IndexParams::Flat, 0).unwrap();
        for q in &qs {
            if cosine && q.iter().all(|x| *x == 0.0) {
                continue;
            }
            let got = idx.search(q, k).unwrap();
            assert_well_formed(&got, k);
            prop_assert_eq!(&got, &brute_force_oracle(&c, q, k, metric).unwrap());
            prop_assert_eq!(got.ids().collect::<Vec<_>>(), selection_top_k(&c, q, k));
        }
    }

    #[test]
    fn ann_results_are_well_formed((points, qs) in corpus_strategy(), k in 1usize..12, seed in 0u64..50) {
        let c = Corpus::from_vectors(points, DistanceMetric::Euclidean).unwrap();
        let nlist = (c.len() / 8).max(1);
        for p in [
            IndexParams::IvfFlat { nlist, nprobe: 1.max(nlist / 2) },
            IndexParams::Hnsw { m: 4, ef_construction: 8, ef_search: 4 },
        ] {
            let idx = build_index(&c, p, seed).unwrap();
            for q in &qs {
                assert_well_formed(&idx.search(q, k).unwrap(), k);
            }
        }
        let full = build_index(&c, IndexParams::IvfFlat { nlist, nprobe: nlist }, seed).unwrap();
        for q in &qs {
            prop_assert_eq!(full.search(q, k).unwrap(), brute_force_oracle(&c, q, k, DistanceMetric::Euclidean).unwrap());
        }
    }
}
