use std::io::Write;

use blackhole_lab::config::{read_json, CorpusSource, SweepAxis};
use blackhole_lab::error::LabError;
use blackhole_lab::theory_suite::{run_theory_suite, ReferenceStats, TheorySuiteConfig};
use blackhole_lab::ExperimentConfig;

fn write_temp(text: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::Builder::new().suffix(".json").tempfile().unwrap();
    f.write_all(text.as_bytes()).unwrap();
    f
}

#[test]
fn example_round_trips() {
    let cfg = ExperimentConfig::example();
    cfg.validate().unwrap();
    let text = serde_json::to_string(&cfg).unwrap();
    let f = write_temp(&text);
    assert_eq!(ExperimentConfig::load(f.path()).unwrap(), cfg);
}

#[test]
fn minimal_config_fills_defaults() {
    let f = write_temp(
        r#"{
            "corpus": {"source": "synthetic", "size": 100,
                       "spectrum": {"dim": 8, "power_law": {"gamma": 0.5}}, "seed": 1},
            "attack": {"mode": "global", "seed": 2},
            "seed": 3
        }"#,
    );
    let cfg = ExperimentConfig::load(f.path()).unwrap();
    assert_eq!(cfg.k, vec![10]);
    assert_eq!(cfg.attack.alpha, 0.01);
    assert!(matches!(cfg.corpus, CorpusSource::Synthetic(_)));
}

#[test]
fn unknown_fields_and_bad_json_are_config_errors() {
    let f = write_temp(r#"{"corpus": {}, "seed": 1, "attack": {"mode": "global", "seed": 1}, "bogus": 1}"#);
    let err = read_json::<ExperimentConfig>(f.path()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let f = write_temp("{ not json");
    assert_eq!(read_json::<ExperimentConfig>(f.path()).unwrap_err().exit_code(), 2);
    let err = read_json::<ExperimentConfig>(std::path::Path::new("/no/such/file.json")).unwrap_err();
    assert!(matches!(err, LabError::ConfigRead { .. }));
}

#[test]
fn invalid_values_are_rejected() {
    let mut cfg = ExperimentConfig::example();
    cfg.k = vec![10, 0];
    assert!(cfg.validate().is_err());
    let mut cfg = ExperimentConfig::example();
    cfg.attack.alpha = 0.0;
    assert!(cfg.validate().is_err());
    let mut cfg = ExperimentConfig::example();
    cfg.theory_delta = 1.0;
    assert!(cfg.validate().is_err());
}

#[test]
fn sweep_axis_parses_from_tagged_json() {
    let axis: SweepAxis = serde_json::from_str(r#"{"axis": "alpha", "values": [0.001, 0.01]}"#).unwrap();
    assert_eq!(axis.name(), "alpha");
    assert_eq!(axis.len(), 2);
}

#[test]
fn empty_theory_suite_is_an_error() {
    let cfg: TheorySuiteConfig = serde_json::from_str(r#"{"seed": 1}"#).unwrap();
    let err = run_theory_suite(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn reference_statistics_reproduce_published_sides() {
    let cfg = TheorySuiteConfig {
        reference: vec![ReferenceStats {
            m1: 1.396,
            m2: 3.31e-3,
            l_op: 1.08e-2,
            n: 1_000_000,
            delta: 0.1,
            t_override: Some((3.69, 17.50)),
        }],
        ..serde_json::from_str(r#"{"seed": 0}"#).unwrap()
    };
    let report = run_theory_suite(&cfg).unwrap();
    let c = &report.reference[0];
    assert!((c.lhs - 1.830).abs() <= 0.01, "lhs {}", c.lhs);
    assert!((c.rhs - 1.697).abs() <= 0.01, "rhs {}", c.rhs);
    assert!(c.holds);
    // t1 = 3.69 corresponds to delta ~0.05, flagged softly
    assert!(report.checks.iter().any(|c| !c.passed));
}

#[test]
fn theory_suite_rows_and_monte_carlo() {
    let cfg: TheorySuiteConfig = serde_json::from_str(
        r#"{"seed": 4, "trials": 2, "sizes": [200, 400],
            "spectra": [{"name": "iso", "spectrum": {"dim": 256, "power_law": {"gamma": 0.0}}}]}"#,
    )
    .unwrap();
    let report = run_theory_suite(&cfg).unwrap();
    assert_eq!(report.rows.len(), 2);
    for r in &report.rows {
        assert!(r.check.holds);
        assert!(r.fraction.unwrap() >= 0.9);
    }
    assert_eq!(blackhole_lab::report::hard_failures(&report.checks), 0);
    assert!(!report.csv_rows("t").is_empty());
}
