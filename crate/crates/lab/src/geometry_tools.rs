//! Stand-alone geometric analyses: distance-to-centroid CDFs and hubness
//! grids.

use std::path::PathBuf;

use blackhole_core::attack::{black_hole_radius, BlackHoleRadius};
use blackhole_core::evaluation::{distance_to_centroid_cdf, hubness_grid, CdfPoint, CentroidScope, HubnessReport, HubnessSweep};
use blackhole_core::DistanceMetric;
use serde::{Deserialize, Serialize};

use crate::config::{resolve_output_dir, CorpusSource};
use crate::error::{LabResult, StageExt};
use crate::experiment::materialize_corpus;
use crate::report::{write_csv, write_json, Row};
use crate::sweep::label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CdfConfig {
    #[serde(default = "cdf_name")]
    pub name: String,
    pub corpus: CorpusSource,
    #[serde(default = "euclidean")]
    pub metric: DistanceMetric,
    #[serde(default = "global")]
    pub scope: CentroidScope,
    #[serde(default = "default_points")]
    pub num_points: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn cdf_name() -> String {
    "cdf".to_string()
}

fn euclidean() -> DistanceMetric {
    DistanceMetric::Euclidean
}

fn global() -> CentroidScope {
    CentroidScope::Global
}

fn default_points() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfReport {
    pub points: Vec<CdfPoint>,
    pub radius: BlackHoleRadius,
}

pub fn run_cdf(cfg: &CdfConfig) -> LabResult<CdfReport> {
    let (corpus, _) = materialize_corpus(&cfg.corpus, cfg.metric)?;
    Ok(CdfReport {
        points: distance_to_centroid_cdf(&corpus, cfg.metric, cfg.scope, cfg.num_points).stage("cdf")?,
        radius: black_hole_radius(&corpus, cfg.scope, cfg.metric).stage("black-hole radius")?,
    })
}

/// Runs the CDF and writes `cdf.csv` (distance, fraction) and `radius.json`.
pub fn run_and_write_cdf(cfg: &CdfConfig) -> LabResult<CdfReport> {
    let report = run_cdf(cfg)?;
    let dir = resolve_output_dir(cfg.output_dir.as_deref(), &cfg.name);
    write_csv(&dir.join("cdf.csv"), &report.points)?;
    write_json(&dir.join("radius.json"), &report.radius)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HubnessConfig {
    #[serde(default = "hubness_name")]
    pub name: String,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(flatten)]
    pub sweep: HubnessSweep,
}

fn hubness_name() -> String {
    "hubness".to_string()
}

/// Evaluates the grid and writes `hubness.json` and long-format `hubness.csv`.
pub fn run_and_write_hubness(cfg: &HubnessConfig) -> LabResult<HubnessReport> {
    let report = hubness_grid(&cfg.sweep).stage("hubness grid")?;
    let rows: Vec<Row> = report
        .entries
        .iter()
        .map(|e| {
            let value = format!("d={},n={}", e.dim, e.corpus_size);
            let section = format!("hubness_{}_{}_{}", e.metric, label(&e.scope), label(&e.population));
            Row::value(&cfg.name, "grid", &value, &section, None, "probability", e.probability)
        })
        .collect();
    let dir = resolve_output_dir(cfg.output_dir.as_deref(), &cfg.name);
    write_csv(&dir.join("hubness.csv"), &rows)?;
    write_json(&dir.join("hubness.json"), &report)?;
    Ok(report)
}
