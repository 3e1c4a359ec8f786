//! Theorem checks over a family of spectra and corpus sizes, with optional
//! Monte-Carlo verification and a hubness grid.

use std::path::PathBuf;

use blackhole_core::evaluation::{hubness_grid, HubnessReport, HubnessSweep};
use blackhole_core::rng::derive_seed;
use blackhole_core::synthgen::{CovarianceStats, SpectrumDoc};
use blackhole_core::theory::{check_condition, monte_carlo_verify, TheoremCheck};
use serde::{Deserialize, Serialize};

use crate::config::{read_json, resolve_output_dir};
use crate::error::{LabError, LabResult, StageExt};
use crate::report::{write_csv, write_json, CheckResult, Row, Severity};
use crate::sweep::label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheorySuiteConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub spectra: Vec<NamedSpectrum>,
    #[serde(default)]
    pub sizes: Vec<usize>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Monte-Carlo corpora per (spectrum, size); 0 evaluates the condition only.
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub seed: u64,
    /// Conditions evaluated directly from published covariance statistics.
    #[serde(default)]
    pub reference: Vec<ReferenceStats>,
    #[serde(default)]
    pub hubness: Option<HubnessSweep>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_name() -> String {
    "theory".to_string()
}

fn default_delta() -> f64 {
    0.1
}

fn default_trials() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedSpectrum {
    pub name: String,
    pub spectrum: SpectrumDoc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceStats {
    pub m1: f64,
    pub m2: f64,
    pub l_op: f64,
    pub n: usize,
    pub delta: f64,
    /// Explicit (t1, t2) in place of the values derived from `delta`.
    #[serde(default)]
    pub t_override: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryRow {
    pub spectrum: String,
    pub n: usize,
    pub check: TheoremCheck,
    /// Mean centroid-dominance fraction, when sampled.
    pub fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub rows: Vec<TheoryRow>,
    pub reference: Vec<TheoremCheck>,
    pub hubness: Option<HubnessReport>,
    pub checks: Vec<CheckResult>,
}

impl TheorySuiteConfig {
    pub fn load(path: &std::path::Path) -> LabResult<Self> {
        read_json(path)
    }

    pub fn validate(&self) -> LabResult<()> {
        if self.spectra.is_empty() && self.reference.is_empty() && self.hubness.is_none() {
            return Err(LabError::config(
                "theory suite is empty: give spectra, reference stats or a hubness grid",
            ));
        }
        if !self.spectra.is_empty() && self.sizes.is_empty() {
            return Err(LabError::config("theory suite has spectra but no sizes"));
        }
        if self.sizes.iter().any(|&n| n < 2) {
            return Err(LabError::config("corpus sizes must be at least 2"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(LabError::config("delta must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn resolved_output_dir(&self) -> PathBuf {
        resolve_output_dir(self.output_dir.as_deref(), &self.name)
    }
}

pub fn run_theory_suite(cfg: &TheorySuiteConfig) -> LabResult<TheoryReport> {
    cfg.validate()?;
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for (i, named) in cfg.spectra.iter().enumerate() {
        let spec = named.spectrum.resolve().stage("resolve spectrum")?;
        for &n in &cfg.sizes {
            let (check, fraction) = if cfg.trials > 0 {
                let seed = derive_seed(cfg.seed, (i as u64) << 32 | n as u64);
                let out = monte_carlo_verify(&spec, n, cfg.delta, cfg.trials, seed).stage("monte carlo")?;
                (out.check, Some(out.fraction))
            } else {
                let check = check_condition(&spec.analytic_stats(n), n, cfg.delta, None).stage("condition")?;
                (check, None)
            };
            if let (true, Some(f)) = (check.holds, fraction) {
                checks.push(CheckResult::new(
                    format!("sound_{}_n{n}", named.name),
                    f >= 1.0 - cfg.delta,
                    Severity::Hard,
                    format!("condition holds; dominance fraction {f:.4} vs {:.4}", 1.0 - cfg.delta),
                ));
            }
            rows.push(TheoryRow {
                spectrum: named.name.clone(),
                n,
                check,
                fraction,
            });
        }
    }
    let reference = cfg
        .reference
        .iter()
        .map(|r| {
            let stats = CovarianceStats::from_moments(r.m1, r.m2, r.l_op, r.n, 0).stage("reference stats")?;
            let check = check_condition(&stats, r.n, r.delta, r.t_override).stage("reference condition")?;
            if let Some(implied) = check.implied_delta {
                if (implied - r.delta).abs() > 1e-3 * r.delta {
                    checks.push(CheckResult::new(
                        "t_override_matches_delta",
                        false,
                        Severity::Soft,
                        format!("t1 = {} implies delta = {implied:.4}, stated {}", check.t1, r.delta),
                    ));
                }
            }
            Ok(check)
        })
        .collect::<LabResult<Vec<_>>>()?;
    let hubness = match &cfg.hubness {
        Some(h) => Some(hubness_grid(h).stage("hubness grid")?),
        None => None,
    };
    Ok(TheoryReport {
        rows,
        reference,
        hubness,
        checks,
    })
}

impl TheoryReport {
    pub fn csv_rows(&self, run: &str) -> Vec<Row> {
        let mut out = Vec::new();
        for r in &self.rows {
            let value = format!("{},n={}", r.spectrum, r.n);
            let mut push = |m: &str, v: f64| out.push(Row::value(run, "spectrum", &value, "theorem", None, m, v));
            push("lhs", r.check.lhs);
            push("rhs", r.check.rhs);
            push("holds", r.check.holds as u8 as f64);
            push("t1", r.check.t1);
            push("t2", r.check.t2);
            if let Some(f) = r.fraction {
                push("dominance_fraction", f);
            }
        }
        for (i, c) in self.reference.iter().enumerate() {
            let value = i.to_string();
            for (m, v) in [("lhs", c.lhs), ("rhs", c.rhs), ("holds", c.holds as u8 as f64)] {
                out.push(Row::value(run, "reference", &value, "theorem", None, m, v));
            }
        }
        if let Some(h) = &self.hubness {
            for e in &h.entries {
                let value = format!("d={},n={}", e.dim, e.corpus_size);
                let section = format!("hubness_{}_{}_{}", e.metric, label(&e.scope), label(&e.population));
                out.push(Row::value(run, "grid", &value, &section, None, "probability", e.probability));
            }
        }
        out
    }
}

/// Runs the suite and writes `theory.json`, `theory.csv` and one
/// `check_<i>.json` per evaluated condition.
pub fn run_and_write_theory(cfg: &TheorySuiteConfig) -> LabResult<TheoryReport> {
    let report = run_theory_suite(cfg)?;
    let dir = cfg.resolved_output_dir();
    write_csv(&dir.join("theory.csv"), &report.csv_rows(&cfg.name))?;
    write_json(&dir.join("theory.json"), &report)?;
    let all = report.rows.iter().map(|r| &r.check).chain(&report.reference);
    for (i, check) in all.enumerate() {
        write_json(&dir.join(format!("check_{i}.json")), check)?;
    }
    Ok(report)
}
