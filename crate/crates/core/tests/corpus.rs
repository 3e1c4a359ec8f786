use std::collections::HashSet;

use blackhole_core::corpus::{load_corpus, save_corpus, Corpus, CorpusFormat, Provenance, Record};
use blackhole_core::{DistanceMetric, Error};
use proptest::prelude::*;

fn sample_corpus() -> Corpus {
    Corpus::from_records(
        vec![
            Record::benign(0, vec![1.0, 2.0, 3.0, 4.0]),
            Record {
                id: 1,
                vector: vec![-0.5, 0.25, 1e-7, 3.4e38],
                content: Some("hello \"world\"\nline".into()),
                provenance: Provenance::Benign,
            },
            Record {
                id: 9,
                vector: vec![0.1, 0.2, 0.3, 0.4],
                content: None,
                provenance: Provenance::Injected,
            },
        ],
        DistanceMetric::Euclidean,
    )
    .unwrap()
}

#[test]
fn jsonl_round_trip_keeps_everything() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    let c = sample_corpus();
    save_corpus(&c, &path, CorpusFormat::Jsonl).unwrap();
    let back = load_corpus(&path, CorpusFormat::Jsonl).unwrap();
    assert_eq!(back, c);
    assert_eq!((back.len(), back.dim()), (3, 4));
    assert_eq!(back.count(Provenance::Injected), 1);
}

#[test]
fn vecbinary_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.fvecs");
    let c = Corpus::from_vectors(
        (0..10_000)
            .map(|i| (0..8).map(|j| ((i * 31 + j * 7) as f32).sin() * 1e3).collect())
            .collect(),
        DistanceMetric::Euclidean,
    )
    .unwrap();
    save_corpus(&c, &path, CorpusFormat::VecBinary).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(bytes.len(), 10_000 * (4 + 8 * 4));
    let back = load_corpus(&path, CorpusFormat::VecBinary).unwrap();
    assert_eq!(back.len(), 10_000);
    for (a, b) in c.vectors().zip(back.vectors()) {
        let a: Vec<u32> = a.iter().map(|x| x.to_bits()).collect();
        let b: Vec<u32> = b.iter().map(|x| x.to_bits()).collect();
        assert_eq!(a, b);
    }
    // re-saving gives identical bytes
    let again = dir.path().join("d.fvecs");
    save_corpus(&back, &again, CorpusFormat::VecBinary).unwrap();
    assert_eq!(std::fs::read(&again).unwrap(), bytes);
}

#[test]
fn csv_bad_cell_names_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.csv");
    std::fs::write(&path, "0,1.0,2.0\n1,3.0,oops\n").unwrap();
    match load_corpus(&path, CorpusFormat::Csv) {
        Err(Error::Parse { line, message, .. }) => {
            assert_eq!(line, 2);
            assert!(message.contains("oops"));
        }
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn inconsistent_dimension_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    std::fs::write(
        &path,
        "{\"id\":0,\"vector\":[1,2]}\n{\"id\":1,\"vector\":[1,2,3]}\n",
    )
    .unwrap();
    assert!(matches!(
        load_corpus(&path, CorpusFormat::Jsonl),
        Err(Error::Parse { line: 2, .. })
    ));
}

#[test]
fn empty_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for (name, format) in [
        ("e.jsonl", CorpusFormat::Jsonl),
        ("e.csv", CorpusFormat::Csv),
        ("e.fvecs", CorpusFormat::VecBinary),
    ] {
        let path = dir.path().join(name);
        std::fs::write(&path, "").unwrap();
        assert!(load_corpus(&path, format).is_err());
    }
}

#[test]
fn truncated_vecbinary_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.fvecs");
    let mut bytes = 2u32.to_le_bytes().to_vec();
    bytes.extend(1.0f32.to_le_bytes());
    std::fs::write(&path, bytes).unwrap();
    assert!(load_corpus(&path, CorpusFormat::VecBinary).is_err());
}

#[test]
fn duplicate_ids_are_rejected() {
    let r = vec![Record::benign(1, vec![0.0]), Record::benign(1, vec![1.0])];
    assert!(matches!(
        Corpus::from_records(r, DistanceMetric::Euclidean),
        Err(Error::DuplicateId(1))
    ));
}

#[test]
fn subsample_behaviour() {
    let c = Corpus::from_vectors(
        (0..10_000).map(|i| vec![i as f32]).collect(),
        DistanceMetric::Euclidean,
    )
    .unwrap();
    assert_eq!(c.subsample(c.len(), 4).unwrap(), c);
    let a = c.subsample(100, 1).unwrap();
    assert_eq!(a, c.subsample(100, 1).unwrap());
    let b = c.subsample(100, 2).unwrap();
    let ia: HashSet<u64> = a.ids().collect();
    let ib: HashSet<u64> = b.ids().collect();
    assert_eq!(ia.len(), 100);
    assert!(ia.intersection(&ib).count() < 100);
    assert!(c.subsample(0, 1).is_err());
    assert!(c.subsample(10_001, 1).is_err());
}

fn arb_record(dim: usize) -> impl Strategy<Value = (Vec<f32>, Option<String>, bool)> {
    (
        prop::collection::vec(prop::num::f32::NORMAL | prop::num::f32::ZERO, dim),
        prop::option::of("[a-zA-Z0-9 {}\"\\\\\n]{0,12}"),
        any::<bool>(),
    )
}

fn arb_corpus() -> impl Strategy<Value = Corpus> {
    (1usize..6)
        .prop_flat_map(|dim| prop::collection::vec(arb_record(dim), 1..20))
        .prop_map(|rows| {
            let records = rows
                .into_iter()
                .enumerate()
                .map(|(i, (vector, content, injected))| Record {
                    id: (i * 3) as u64,
                    vector,
                    content,
                    provenance: if injected { Provenance::Injected } else { Provenance::Benign },
                })
                .collect();
            Corpus::from_records(records, DistanceMetric::Euclidean).unwrap()
        })
}

/// The part of a corpus a lossy format can carry.
fn strip(c: &Corpus, positional_ids: bool) -> Corpus {
    let records = c
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| Record::benign(if positional_ids { i as u64 } else { r.id }, r.vector.clone()))
        .collect();
    Corpus::from_records(records, DistanceMetric::Euclidean).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_format_round_trips(c in arb_corpus()) {
        let dir = tempfile::tempdir().unwrap();
        for (format, expected) in [
            (CorpusFormat::Jsonl, c.clone()),
            (CorpusFormat::Csv, strip(&c, false)),
            (CorpusFormat::VecBinary, strip(&c, true)),
        ] {
            let path = dir.path().join("c.out");
            save_corpus(&c, &path, format).unwrap();
            let back = load_corpus(&path, format).unwrap();
            prop_assert_eq!(back.len(), c.len());
            prop_assert_eq!(
                back.count(Provenance::Benign) + back.count(Provenance::Injected),
                back.len()
            );
            prop_assert_eq!(back, expected);
        }
    }
}
