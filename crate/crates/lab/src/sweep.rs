//! One-axis parameter sweeps over a base experiment.

use blackhole_core::attack::AttackMode;
use blackhole_core::evaluation::{hubness_grid, HubnessEntry, HubnessSweep};
use blackhole_core::DistanceMetric;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, SweepAxis};
use crate::error::{LabError, LabResult};
use crate::experiment::PreparedExperiment;
use crate::report::{write_csv, write_json, CheckResult, Row, RunReport, Severity};

/// Slack allowed on trend expectations.
pub const TREND_SLACK: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub value: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<RunReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hubness: Vec<HubnessEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub axis: String,
    pub cells: Vec<SweepCell>,
    pub checks: Vec<CheckResult>,
}

impl SweepReport {
    pub fn rows(&self, run: &str) -> Vec<Row> {
        let mut rows = Vec::new();
        for cell in &self.cells {
            if let Some(e) = &cell.error {
                rows.push(Row::failure(run, &self.axis, &cell.value, e.clone()));
            }
            if let Some(r) = &cell.report {
                rows.extend(r.rows(&self.axis, &cell.value));
            }
            for h in &cell.hubness {
                let section = format!("hubness_{}_{}_{}", h.metric, label(&h.scope), label(&h.population));
                rows.push(Row::value(run, &self.axis, &cell.value, &section, None, "probability", h.probability));
                rows.push(Row::value(run, &self.axis, &cell.value, &section, None, "samples", h.samples as f64));
            }
        }
        rows
    }

    /// Primary-K MO@K of each successful cell, in axis order.
    pub fn mo_at_k(&self) -> Vec<Option<f64>> {
        self.cells
            .iter()
            .map(|c| {
                let r = c.report.as_ref()?;
                Some(r.attacked_at(r.config.primary_k())?.mo_at_k)
            })
            .collect()
    }
}

/// Serialized name of a unit enum variant.
pub(crate) fn label<T: Serialize>(value: &T) -> String {
    match serde_json::to_value(value) {
        Ok(serde_json::Value::String(s)) => s,
        _ => String::new(),
    }
}

/// The base config with one axis value applied.
fn cell_config(base: &ExperimentConfig, axis: &SweepAxis, i: usize) -> (String, ExperimentConfig) {
    let mut cfg = base.clone();
    cfg.sweep = None;
    let label = match axis {
        SweepAxis::Alpha { values } => {
            cfg.attack.alpha = values[i];
            values[i].to_string()
        }
        SweepAxis::K { values } => {
            cfg.k = vec![values[i]];
            values[i].to_string()
        }
        SweepAxis::Clusters { values } => {
            cfg.attack.mode = AttackMode::ClusterWise { clusters: values[i] };
            values[i].to_string()
        }
        SweepAxis::Metric { values } => {
            cfg.metric = values[i];
            values[i].to_string()
        }
        SweepAxis::Grid(_) => unreachable!("grid cells are not experiment runs"),
    };
    (label, cfg)
}

/// Runs every axis value. Failed cells are recorded and the sweep continues.
pub fn run_sweep(base: &ExperimentConfig, axis: &SweepAxis) -> LabResult<SweepReport> {
    if axis.is_empty() {
        return Err(LabError::config(format!("sweep axis '{}' has no values", axis.name())));
    }
    if let SweepAxis::Grid(grid) = axis {
        return Ok(run_grid(grid));
    }
    base.validate()?;
    let prepared = PreparedExperiment::prepare(base)?;
    let mut cells = Vec::with_capacity(axis.len());
    for i in 0..axis.len() {
        let (value, cfg) = cell_config(base, axis, i);
        log::info!("sweep {} = {value}", axis.name());
        cells.push(match prepared.run(&cfg) {
            Ok(report) => SweepCell {
                value,
                report: Some(report),
                hubness: vec![],
                error: None,
            },
            Err(e) => {
                log::warn!("sweep cell {} = {value} failed: {e}", axis.name());
                SweepCell {
                    value,
                    report: None,
                    hubness: vec![],
                    error: Some(e.to_string()),
                }
            }
        });
    }
    let mut report = SweepReport {
        axis: axis.name().to_string(),
        cells,
        checks: Vec::new(),
    };
    report.checks = trend_checks(axis, &report);
    Ok(report)
}

fn run_grid(grid: &HubnessSweep) -> SweepReport {
    let mut cells = Vec::new();
    for &dim in &grid.dims {
        for &size in &grid.sizes {
            let one = HubnessSweep {
                dims: vec![dim],
                sizes: vec![size],
                ..grid.clone()
            };
            let value = format!("d={dim},n={size}");
            cells.push(match hubness_grid(&one) {
                Ok(r) => SweepCell {
                    value,
                    report: None,
                    hubness: r.entries,
                    error: None,
                },
                Err(e) => SweepCell {
                    value,
                    report: None,
                    hubness: vec![],
                    error: Some(e.to_string()),
                },
            });
        }
    }
    SweepReport {
        axis: "grid".to_string(),
        cells,
        checks: Vec::new(),
    }
}

fn trend_checks(axis: &SweepAxis, report: &SweepReport) -> Vec<CheckResult> {
    let mo = report.mo_at_k();
    match axis {
        SweepAxis::Alpha { values } => {
            let mut order: Vec<usize> = (0..values.len()).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            let series: Vec<Option<f64>> = order.iter().map(|&i| mo[i]).collect();
            let ok = series
                .windows(2)
                .all(|w| matches!(w, [Some(a), Some(b)] if *b + TREND_SLACK >= *a));
            vec![CheckResult::new(
                "mo_non_decreasing_in_alpha",
                ok,
                Severity::Soft,
                format!("{series:?}"),
            )]
        }
        SweepAxis::Metric { values } => {
            let at = |m| values.iter().position(|v| *v == m).and_then(|i| mo[i]);
            match (at(DistanceMetric::Euclidean), at(DistanceMetric::Cosine)) {
                (Some(e), Some(c)) => vec![CheckResult::new(
                    "euclidean_mo_at_least_cosine",
                    e + TREND_SLACK >= c,
                    Severity::Soft,
                    format!("euclidean {e:.4}, cosine {c:.4}"),
                )],
                _ => vec![],
            }
        }
        _ => vec![],
    }
}

/// Runs the sweep and writes `sweep.json` and `sweep.csv`.
pub fn run_and_write_sweep(base: &ExperimentConfig, axis: &SweepAxis) -> LabResult<SweepReport> {
    let report = run_sweep(base, axis)?;
    let dir = base.resolved_output_dir();
    write_csv(&dir.join("sweep.csv"), &report.rows(&base.name))?;
    write_json(&dir.join("sweep.json"), &report)?;
    Ok(report)
}
