//! Report types and their JSON / long-format CSV serialization.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use blackhole_core::corpus::write_atomically;
use blackhole_core::defense::DefenseEvaluation;
use blackhole_core::evaluation::MetricsReport;
use blackhole_core::index::IndexParams;
use blackhole_core::theory::TheoremCheck;
use blackhole_core::DistanceMetric;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{LabError, LabResult, StageExt};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    /// Fails `--check`.
    Hard,
    /// A trend expectation; reported but never fatal.
    Soft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub severity: Severity,
    pub detail: String,
}

impl CheckResult {
    pub fn new(name: impl Into<String>, passed: bool, severity: Severity, detail: String) -> Self {
        CheckResult {
            name: name.into(),
            passed,
            severity,
            detail,
        }
    }
}

/// Number of failed hard checks.
pub fn hard_failures(checks: &[CheckResult]) -> usize {
    checks
        .iter()
        .filter(|c| !c.passed && c.severity == Severity::Hard)
        .count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub size: usize,
    pub dim: usize,
    pub metric: DistanceMetric,
    pub queries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSummary {
    pub params: IndexParams,
    /// Recall measured while tuning, when the index was tuned.
    pub tuned_recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSummary {
    pub budget: usize,
    pub injected: usize,
    pub sigma: f64,
    pub zero_injection: bool,
    pub per_cluster: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub corpus: CorpusSummary,
    pub index: IndexSummary,
    /// Clean-corpus metrics per K.
    pub clean: Vec<MetricsReport>,
    pub attack: AttackSummary,
    /// Poisoned-corpus metrics per K, recall against clean ground truth.
    pub attacked: Vec<MetricsReport>,
    pub defense: Option<DefenseEvaluation>,
    /// Condition evaluated on the generating spectrum (synthetic corpora only).
    pub theorem: Option<TheoremCheck>,
    pub checks: Vec<CheckResult>,
    /// Seconds per stage; the only field that varies between identical runs.
    pub timings: BTreeMap<String, f64>,
    pub artifacts: Vec<PathBuf>,
}

impl RunReport {
    pub fn attacked_at(&self, k: usize) -> Option<&MetricsReport> {
        self.attacked.iter().find(|m| m.k == k)
    }

    pub fn clean_at(&self, k: usize) -> Option<&MetricsReport> {
        self.clean.iter().find(|m| m.k == k)
    }

    /// Copy with timings cleared, for run-to-run comparisons.
    pub fn without_timings(&self) -> RunReport {
        RunReport {
            timings: BTreeMap::new(),
            ..self.clone()
        }
    }

    /// One row per measurement.
    pub fn rows(&self, axis: &str, axis_value: &str) -> Vec<Row> {
        let mut rows = Vec::new();
        let mut push = |section: &str, k: Option<usize>, measure: &str, value: f64| {
            rows.push(Row::value(&self.config.name, axis, axis_value, section, k, measure, value));
        };
        for (section, reports) in [("clean", &self.clean), ("attacked", &self.attacked)] {
            for m in reports {
                metric_rows(&mut push, section, m);
            }
        }
        push("attack", None, "budget", self.attack.budget as f64);
        push("attack", None, "injected", self.attack.injected as f64);
        push("attack", None, "sigma", self.attack.sigma);
        if let Some(d) = &self.defense {
            let section = format!("defense_{}", d.defense.name());
            metric_rows(&mut push, &format!("{section}_undefended"), &d.undefended);
            metric_rows(&mut push, &section, &d.defended);
            push(&section, Some(d.defended.k), "utility_recall", d.utility_recall);
            push(&section, None, "degenerate_vectors", d.degenerate_vectors as f64);
            if let Some(s) = &d.detection {
                push(&section, None, "removed_injected", s.removed_injected as f64);
                push(&section, None, "removed_benign", s.removed_benign as f64);
            }
        }
        if let Some(t) = &self.theorem {
            push("theorem", None, "lhs", t.lhs);
            push("theorem", None, "rhs", t.rhs);
            push("theorem", None, "holds", t.holds as u8 as f64);
        }
        rows
    }
}

fn metric_rows(push: &mut impl FnMut(&str, Option<usize>, &str, f64), section: &str, m: &MetricsReport) {
    if let Some(r) = m.recall_at_k {
        push(section, Some(m.k), "recall_at_k", r);
    }
    push(section, Some(m.k), "mo_at_k", m.mo_at_k);
    push(section, Some(m.k), "asr", m.asr);
    if let Some(f) = m.mean_fpr {
        push(section, Some(m.k), "mean_fpr", f);
    }
}

/// Long-format CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub run: String,
    pub axis: String,
    pub axis_value: String,
    pub section: String,
    pub k: Option<usize>,
    pub measure: String,
    pub value: Option<f64>,
    pub error: Option<String>,
}

impl Row {
    pub fn value(
        run: &str,
        axis: &str,
        axis_value: &str,
        section: &str,
        k: Option<usize>,
        measure: &str,
        value: f64,
    ) -> Row {
        Row {
            run: run.to_string(),
            axis: axis.to_string(),
            axis_value: axis_value.to_string(),
            section: section.to_string(),
            k,
            measure: measure.to_string(),
            value: Some(value),
            error: None,
        }
    }

    pub fn failure(run: &str, axis: &str, axis_value: &str, error: String) -> Row {
        Row {
            run: run.to_string(),
            axis: axis.to_string(),
            axis_value: axis_value.to_string(),
            section: "error".to_string(),
            k: None,
            measure: String::new(),
            value: None,
            error: Some(error),
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> LabResult<()> {
    ensure_parent(path)?;
    write_atomically(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        std::io::Write::write_all(w, b"\n")
    })
    .stage("write report")
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> LabResult<()> {
    ensure_parent(path)?;
    write_atomically(path, |w| {
        let mut out = csv::Writer::from_writer(w);
        for r in rows {
            out.serialize(r)?;
        }
        out.flush()
    })
    .stage("write csv")
}

fn ensure_parent(path: &Path) -> LabResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| LabError::Stage {
            stage: "create output directory",
            source: blackhole_core::Error::io(dir, e),
        })?;
    }
    Ok(())
}
