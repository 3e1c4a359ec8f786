//! The sufficient condition for centroid dominance and its Monte-Carlo check.
//!
//! With `t1 = ln(2/δ)` and `t2 = ln(2(n-1)/δ)`, the centroid of n Gaussian
//! samples is closer to each sample than any other sample, with probability
//! at least `1 - δ`, whenever
//!
//! `2(m1 - 2√(m2·t2)) > (1 - 1/n)(m1 + 2√(m2·t1) + 2·l_op·t1)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{hubness_probability, CentroidScope, Population};
use crate::geometry::DistanceMetric;
use crate::rng::derive_seed;
use crate::synthgen::{sample_gaussian_corpus, Basis, CovarianceStats, SpectrumSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremCheck {
    pub n: usize,
    pub delta: f64,
    pub t1: f64,
    pub t2: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    /// d_eff >= ln(n/δ); advisory only.
    pub heuristic_d_eff_ok: bool,
    /// eff_rank >= ln(1/δ); advisory only.
    pub heuristic_rank_ok: bool,
    /// True when t1/t2 were supplied rather than derived from δ.
    pub t_overridden: bool,
    /// δ implied by the supplied t1 (`2·e^(-t1)`), reported so a mismatch with
    /// `delta` is visible.
    pub implied_delta: Option<f64>,
}

pub fn t_values(n: usize, delta: f64) -> (f64, f64) {
    ((2.0 / delta).ln(), (2.0 * (n as f64 - 1.0) / delta).ln())
}

pub fn condition_lhs(stats: &CovarianceStats, t2: f64) -> f64 {
    2.0 * (stats.m1 - 2.0 * (stats.m2 * t2).sqrt())
}

pub fn condition_rhs(stats: &CovarianceStats, n: usize, t1: f64) -> f64 {
    (1.0 - 1.0 / n as f64) * (stats.m1 + 2.0 * (stats.m2 * t1).sqrt() + 2.0 * stats.l_op * t1)
}

pub fn check_condition(
    stats: &CovarianceStats,
    n: usize,
    delta: f64,
    t_override: Option<(f64, f64)>,
) -> Result<TheoremCheck> {
    if n < 2 {
        return Err(Error::invalid(format!("n = {n} must be at least 2")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta {delta} must lie in (0, 1)")));
    }
    if !(stats.m1 > 0.0 && stats.m2 > 0.0 && stats.l_op > 0.0) {
        return Err(Error::invalid("covariance statistics must be positive"));
    }
    let (t1, t2) = match t_override {
        Some((t1, t2)) => {
            if !(t1 > 0.0 && t2 > 0.0) {
                return Err(Error::invalid("overridden t values must be positive"));
            }
            (t1, t2)
        }
        None => t_values(n, delta),
    };
    let lhs = condition_lhs(stats, t2);
    let rhs = condition_rhs(stats, n, t1);
    let implied_delta = t_override.map(|(t1, _)| 2.0 * (-t1).exp());
    if let Some(implied) = implied_delta {
        if (implied - delta).abs() > 1e-3 * delta {
            log::warn!(
                "t1 = {t1} corresponds to delta = {implied:.4}, not the stated delta = {delta}"
            );
        }
    }
    Ok(TheoremCheck {
        n,
        delta,
        t1,
        t2,
        lhs,
        rhs,
        holds: lhs > rhs,
        heuristic_d_eff_ok: stats.d_eff >= (n as f64 / delta).ln(),
        heuristic_rank_ok: stats.eff_rank >= (1.0 / delta).ln(),
        t_overridden: t_override.is_some(),
        implied_delta,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloOutcome {
    /// Mean over trials of the centroid-dominance fraction.
    pub fraction: f64,
    pub per_trial: Vec<f64>,
    /// The condition evaluated on the spectrum's exact statistics.
    pub check: TheoremCheck,
}

/// Samples `trials` corpora of size `n` and measures how often the global
/// centroid beats every other sample (Euclidean).
pub fn monte_carlo_verify(
    spec: &SpectrumSpec,
    n: usize,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<MonteCarloOutcome> {
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let check = check_condition(&spec.analytic_stats(n), n, delta, None)?;
    let per_trial = (0..trials)
        .into_par_iter()
        .map(|t| {
            let corpus = sample_gaussian_corpus(spec, n, derive_seed(seed, t as u64), Basis::Axis)?;
            let e = hubness_probability(
                &corpus,
                None,
                DistanceMetric::Euclidean,
                CentroidScope::Global,
                Population::Corpus,
            )?;
            Ok(e.probability)
        })
        .collect::<Result<Vec<f64>>>()?;
    let fraction = per_trial.iter().sum::<f64>() / trials as f64;
    Ok(MonteCarloOutcome {
        fraction,
        per_trial,
        check,
    })
}
