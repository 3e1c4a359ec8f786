use blackhole_core::attack::{AttackConfig, AttackMode};
use blackhole_core::defense::DefenseSpec;
use blackhole_core::synthgen::{Basis, SpectrumDoc};
use blackhole_core::DistanceMetric;
use blackhole_lab::config::{CorpusSource, QuerySource, SweepAxis, SyntheticCorpus};
use blackhole_lab::error::LabError;
use blackhole_lab::experiment::enforce;
use blackhole_lab::sweep::run_sweep;
use blackhole_lab::{run_attack_experiment, ExperimentConfig, PreparedExperiment};

fn small(size: usize, alpha: f64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::example();
    cfg.corpus = CorpusSource::Synthetic(SyntheticCorpus {
        size,
        spectrum: SpectrumDoc::power_law(32, 0.1),
        mean_scale: 0.3,
        satellites: vec![],
        basis: Basis::Axis,
        seed: 5,
    });
    cfg.queries = QuerySource::Synthetic { count: 40, seed: None };
    cfg.attack = AttackConfig::new(AttackMode::ClusterWise { clusters: 5 }, alpha, 9);
    cfg.k = vec![10, 5];
    cfg
}

#[test]
fn zero_budget_leaves_metrics_at_the_clean_baseline() {
    let cfg = small(500, 0.001);
    let report = PreparedExperiment::prepare(&cfg).unwrap().run(&cfg).unwrap();
    assert!(report.attack.zero_injection);
    assert_eq!(report.attack.injected, 0);
    assert_eq!(report.attacked, report.clean);
    let flag = report.checks.iter().find(|c| c.name == "zero_injection").unwrap();
    assert!(!flag.passed);
    // soft only
    assert!(enforce(&report.checks).is_ok());
}

#[test]
fn identical_configs_give_identical_reports() {
    let mut cfg = small(1500, 0.02);
    cfg.defense = Some(DefenseSpec::CenteredL2);
    let a = PreparedExperiment::prepare(&cfg).unwrap().run(&cfg).unwrap();
    let b = PreparedExperiment::prepare(&cfg).unwrap().run(&cfg).unwrap();
    assert_eq!(a.without_timings(), b.without_timings());
    assert_eq!(a.attack.budget, 30);
    assert!(a.attack.injected <= 30 && a.attack.injected >= 26);
    assert!(a.attacked_at(10).unwrap().mo_at_k > 0.0);
    assert_eq!(a.attacked.len(), 2);
}

#[test]
fn hard_check_failure_is_reported() {
    let mut cfg = small(1000, 0.01);
    cfg.checks.min_mo_at_k = Some(1.1);
    let report = PreparedExperiment::prepare(&cfg).unwrap().run(&cfg).unwrap();
    assert!(matches!(enforce(&report.checks), Err(LabError::ChecksFailed(1))));
}

#[test]
fn defense_thresholds_without_defense_fail() {
    let mut cfg = small(600, 0.01);
    cfg.checks.max_defended_mo_at_k = Some(0.5);
    let report = PreparedExperiment::prepare(&cfg).unwrap().run(&cfg).unwrap();
    assert!(enforce(&report.checks).is_err());
}

#[test]
fn writes_report_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(800, 0.02);
    cfg.output_dir = Some(dir.path().join("run"));
    let report = run_attack_experiment(&cfg).unwrap();
    let json = std::fs::read_to_string(dir.path().join("run/report.json")).unwrap();
    let value: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(value["attack"]["budget"], 16);
    let mut rdr = csv::Reader::from_path(dir.path().join("run/metrics.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), report.rows("none", "").len());
    assert!(rows.iter().any(|r| &r[3] == "attacked" && &r[5] == "mo_at_k"));
}

#[test]
fn global_attack_and_cosine_vs_euclidean_sweep() {
    let mut cfg = small(1200, 0.02);
    cfg.attack.mode = AttackMode::Global;
    let axis = SweepAxis::Metric {
        values: vec![DistanceMetric::Cosine, DistanceMetric::Euclidean],
    };
    let report = run_sweep(&cfg, &axis).unwrap();
    assert_eq!(report.cells.len(), 2);
    assert!(report.cells.iter().all(|c| c.error.is_none()));
    assert_eq!(report.checks.len(), 1);
}

#[test]
fn sweep_records_failed_cells_and_continues() {
    let cfg = small(800, 0.01);
    let axis = SweepAxis::Alpha {
        values: vec![0.01, 1.5, 0.05],
    };
    let report = run_sweep(&cfg, &axis).unwrap();
    assert_eq!(report.cells.len(), 3);
    assert!(report.cells[0].error.is_none());
    assert!(report.cells[1].error.is_some());
    assert!(report.cells[2].report.is_some());
    let mo = report.mo_at_k();
    assert!(mo[1].is_none());
    assert!(mo[2].unwrap() >= mo[0].unwrap());
    // the missing value breaks the trend series
    assert!(!report.checks[0].passed);
    let rows = report.rows("r");
    assert!(rows.iter().any(|r| r.error.is_some()));
}

#[test]
fn single_value_axis_matches_a_plain_run() {
    let cfg = small(700, 0.02);
    let report = run_sweep(&cfg, &SweepAxis::Clusters { values: vec![5] }).unwrap();
    let plain = PreparedExperiment::prepare(&cfg).unwrap().run(&cfg).unwrap();
    let cell = report.cells[0].report.as_ref().unwrap();
    assert_eq!(cell.attacked, plain.attacked);
}

#[test]
fn empty_axis_is_a_config_error() {
    let cfg = small(300, 0.01);
    let err = run_sweep(&cfg, &SweepAxis::K { values: vec![] }).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn held_out_queries_come_from_the_corpus() {
    let mut cfg = small(500, 0.02);
    cfg.queries = QuerySource::HeldOut { count: 50 };
    let prepared = PreparedExperiment::prepare(&cfg).unwrap();
    assert_eq!(prepared.corpus.len(), 450);
    assert_eq!(prepared.queries.len(), 50);
    let report = prepared.run(&cfg).unwrap();
    assert_eq!(report.clean_at(10).unwrap().recall_at_k, Some(1.0));
}
