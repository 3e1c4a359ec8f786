//! The attack pipeline: corpus, index, clean baseline, attack, metrics,
//! optional defense and theorem check.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use blackhole_core::attack::{cluster_wise_attack_with, global_centroid_attack, AttackMode, AttackOutcome};
use blackhole_core::clustering::{kmeans, Clustering, KMeansParams};
use blackhole_core::corpus::{load_corpus, Corpus, QuerySet};
use blackhole_core::defense::evaluate_defense;
use blackhole_core::evaluation::{attack_metrics, recall_at_k, truncate_results, MetricsReport};
use blackhole_core::index::{brute_force_batch, build_index, tune_to_recall_with, IndexParams, SearchResult};
use blackhole_core::theory::check_condition;
use blackhole_core::DistanceMetric;

use crate::config::{format_for, CorpusSource, ExperimentConfig, IndexChoice, QuerySource};
use crate::error::{LabError, LabResult, StageExt};
use crate::mixture::Mixture;
use crate::report::{
    hard_failures, write_csv, write_json, AttackSummary, CheckResult, CorpusSummary, IndexSummary,
    RunReport, Severity,
};

type ClusterKey = (DistanceMetric, usize, u64, usize, u64);

/// A loaded corpus and query set shared by every run over them, with caches
/// for the expensive pieces (k-means and exact ground truth).
pub struct PreparedExperiment {
    pub corpus: Corpus,
    pub queries: QuerySet,
    pub mixture: Option<Mixture>,
    clusterings: Mutex<HashMap<ClusterKey, Arc<Clustering>>>,
    truths: Mutex<HashMap<(DistanceMetric, usize), Arc<Vec<SearchResult>>>>,
}

impl PreparedExperiment {
    pub fn prepare(cfg: &ExperimentConfig) -> LabResult<Self> {
        let (corpus, mixture) = materialize_corpus(&cfg.corpus, cfg.metric)?;
        let (corpus, queries) = match &cfg.queries {
            QuerySource::Synthetic { count, seed } => {
                let m = mixture
                    .as_ref()
                    .ok_or_else(|| LabError::config("synthetic queries need a synthetic corpus"))?;
                (corpus, m.sample_queries(*count, *seed).stage("synthetic queries")?)
            }
            QuerySource::File { path, format } => {
                let q = load_corpus(path, format_for(path, *format)?).stage("load queries")?;
                (corpus, QuerySet::from_corpus(&q))
            }
            QuerySource::HeldOut { count } => corpus.split_queries(*count).stage("hold out queries")?,
        };
        if queries.dim() != corpus.dim() {
            return Err(LabError::config(format!(
                "queries have dimension {}, corpus {}",
                queries.dim(),
                corpus.dim()
            )));
        }
        Ok(PreparedExperiment {
            corpus,
            queries,
            mixture,
            clusterings: Mutex::new(HashMap::new()),
            truths: Mutex::new(HashMap::new()),
        })
    }

    /// The clean corpus under `metric`.
    pub fn corpus_for(&self, metric: DistanceMetric) -> Corpus {
        if metric == self.corpus.metric() {
            self.corpus.clone()
        } else {
            self.corpus.clone().with_metric(metric)
        }
    }

    /// k-means of the clean corpus, computed once per parameter set.
    pub fn clustering(&self, corpus: &Corpus, params: &KMeansParams) -> LabResult<Arc<Clustering>> {
        let key = (
            corpus.metric(),
            params.clusters,
            params.seed,
            params.max_iters,
            params.tol.to_bits(),
        );
        if let Some(c) = self.clusterings.lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(c));
        }
        let c = Arc::new(kmeans(corpus, params).stage("cluster corpus")?);
        self.clusterings
            .lock()
            .expect("cache lock")
            .insert(key, Arc::clone(&c));
        Ok(c)
    }

    /// Exact top-`k` over the clean corpus.
    pub fn truth(&self, corpus: &Corpus, k: usize) -> LabResult<Arc<Vec<SearchResult>>> {
        let key = (corpus.metric(), k);
        if let Some(t) = self.truths.lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(t));
        }
        let t = Arc::new(brute_force_batch(corpus, &self.queries, k).stage("ground truth")?);
        self.truths.lock().expect("cache lock").insert(key, Arc::clone(&t));
        Ok(t)
    }

    /// Runs the injection `cfg` describes against the clean corpus.
    pub fn attack(&self, corpus: &Corpus, cfg: &ExperimentConfig) -> LabResult<AttackOutcome> {
        match cfg.attack.mode {
            AttackMode::Global => global_centroid_attack(corpus, &cfg.attack).stage("attack"),
            AttackMode::ClusterWise { clusters } => {
                if clusters > corpus.len() {
                    return Err(LabError::config(format!(
                        "{clusters} clusters exceed corpus size {}",
                        corpus.len()
                    )));
                }
                let clustering = self.clustering(corpus, &cfg.attack.kmeans_params(clusters))?;
                cluster_wise_attack_with(corpus, &cfg.attack, &clustering).stage("attack")
            }
        }
    }

    /// The full pipeline for one configuration over the prepared data. The
    /// config's corpus and query sources are not re-read.
    pub fn run(&self, cfg: &ExperimentConfig) -> LabResult<RunReport> {
        cfg.validate()?;
        let mut timings = BTreeMap::new();
        let mut clock = Stopwatch::new();
        let clean = self.corpus_for(cfg.metric);
        let k_max = cfg.max_k();

        let (params, tuned_recall) = match &cfg.index {
            IndexChoice::Fixed { params } => {
                params
                    .validate(clean.len())
                    .map_err(|e| LabError::config(format!("index: {e}")))?;
                (*params, None)
            }
            IndexChoice::Tune {
                kind,
                target,
                schedule,
            } => {
                let out = tune_to_recall_with(
                    &clean,
                    *kind,
                    &self.queries,
                    cfg.primary_k(),
                    *target,
                    cfg.seed,
                    schedule,
                )
                .stage("tune index")?;
                (out.params, Some(out.recall))
            }
        };
        clock.lap(&mut timings, "index_tuning");

        let truth = self.truth(&clean, k_max)?;
        let clean_results = search(&clean, params, cfg.seed, &self.queries, k_max).stage("clean search")?;
        let clean_metrics = per_k(&cfg.k, &clean_results, &truth, &BTreeSet::new()).stage("clean metrics")?;
        clock.lap(&mut timings, "clean_baseline");

        let outcome = self.attack(&clean, cfg)?;
        clock.lap(&mut timings, "attack");

        let attacked_results =
            search(&outcome.corpus, params, cfg.seed, &self.queries, k_max).stage("poisoned search")?;
        let attacked = per_k(&cfg.k, &attacked_results, &truth, &outcome.injected_ids).stage("attack metrics")?;
        clock.lap(&mut timings, "attacked_search");

        let defense = match &cfg.defense {
            Some(spec) => Some(
                evaluate_defense(
                    spec,
                    &clean,
                    &outcome.corpus,
                    &self.queries,
                    cfg.primary_k(),
                    params,
                    cfg.seed,
                )
                .stage("defense")?,
            ),
            None => None,
        };
        clock.lap(&mut timings, "defense");

        let theorem = match &self.mixture {
            Some(m) => Some(
                check_condition(&m.core().analytic_stats(clean.len()), clean.len(), cfg.theory_delta, None)
                    .stage("theorem check")?,
            ),
            None => None,
        };

        let mut report = RunReport {
            config: cfg.clone(),
            corpus: CorpusSummary {
                size: clean.len(),
                dim: clean.dim(),
                metric: clean.metric(),
                queries: self.queries.len(),
            },
            index: IndexSummary { params, tuned_recall },
            clean: clean_metrics,
            attack: AttackSummary {
                budget: outcome.budget,
                injected: outcome.injected_ids.len(),
                sigma: outcome.sigma,
                zero_injection: outcome.zero_injection,
                per_cluster: outcome.per_cluster.clone(),
            },
            attacked,
            defense,
            theorem,
            checks: Vec::new(),
            timings,
            artifacts: Vec::new(),
        };
        report.checks = evaluate_checks(&report);
        Ok(report)
    }
}

/// Loads or samples a corpus; synthetic sources also return their mixture.
pub fn materialize_corpus(
    source: &CorpusSource,
    metric: DistanceMetric,
) -> LabResult<(Corpus, Option<Mixture>)> {
    match source {
        CorpusSource::File { path, format } => {
            let c = load_corpus(path, format_for(path, *format)?).stage("load corpus")?;
            Ok((c.with_metric(metric), None))
        }
        CorpusSource::Synthetic(s) => {
            s.validate()?;
            let m = Mixture::new(s).stage("synthetic corpus")?;
            let c = m.sample_corpus(s.size, metric).stage("synthetic corpus")?;
            Ok((c, Some(m)))
        }
    }
}

fn search(
    corpus: &Corpus,
    params: IndexParams,
    seed: u64,
    queries: &QuerySet,
    k: usize,
) -> blackhole_core::Result<Vec<SearchResult>> {
    build_index(corpus, params, seed)?.search_batch(queries, k)
}

fn per_k(
    ks: &[usize],
    results: &[SearchResult],
    truth: &[SearchResult],
    poison: &BTreeSet<u64>,
) -> blackhole_core::Result<Vec<MetricsReport>> {
    ks.iter()
        .map(|&k| {
            let r = truncate_results(results, k);
            let t = truncate_results(truth, k);
            Ok(attack_metrics(&r, poison, k)?.with_recall(recall_at_k(&r, &t, k)?))
        })
        .collect()
}

struct Stopwatch(Instant);

impl Stopwatch {
    fn new() -> Self {
        Stopwatch(Instant::now())
    }

    fn lap(&mut self, timings: &mut BTreeMap<String, f64>, stage: &str) {
        timings.insert(stage.to_string(), self.0.elapsed().as_secs_f64());
        self.0 = Instant::now();
    }
}

fn evaluate_checks(report: &RunReport) -> Vec<CheckResult> {
    let c = &report.config.checks;
    let k = report.config.primary_k();
    let attacked = report.attacked_at(k).expect("primary K evaluated");
    let clean = report.clean_at(k).expect("primary K evaluated");
    let mut out = Vec::new();
    let mut at_least = |name: &str, value: f64, bound: Option<f64>| {
        if let Some(b) = bound {
            out.push(CheckResult::new(
                name,
                value >= b,
                Severity::Hard,
                format!("{value:.4} >= {b}"),
            ));
        }
    };
    at_least("min_mo_at_k", attacked.mo_at_k, c.min_mo_at_k);
    at_least("min_asr", attacked.asr, c.min_asr);
    at_least("min_clean_recall", clean.recall_at_k.unwrap_or(0.0), c.min_clean_recall);
    if let Some(d) = &report.defense {
        at_least("min_utility_recall", d.utility_recall, c.min_utility_recall);
        if let Some(b) = c.max_defended_mo_at_k {
            out.push(CheckResult::new(
                "max_defended_mo_at_k",
                d.defended.mo_at_k <= b,
                Severity::Hard,
                format!("{:.4} <= {b}", d.defended.mo_at_k),
            ));
        }
    } else if c.max_defended_mo_at_k.is_some() || c.min_utility_recall.is_some() {
        out.push(CheckResult::new(
            "defense_checks",
            false,
            Severity::Hard,
            "defense thresholds set but no defense configured".to_string(),
        ));
    }
    if report.attack.zero_injection {
        out.push(CheckResult::new(
            "zero_injection",
            false,
            Severity::Soft,
            format!(
                "no poison injected (budget {} over {} target centroids floors to zero per target)",
                report.attack.budget,
                report.attack.per_cluster.len()
            ),
        ));
    }
    out
}

/// Prepares, runs and writes `report.json` and `metrics.csv` into the
/// resolved output directory.
pub fn run_attack_experiment(cfg: &ExperimentConfig) -> LabResult<RunReport> {
    cfg.validate()?;
    let prepared = PreparedExperiment::prepare(cfg)?;
    let mut report = prepared.run(cfg)?;
    let dir = cfg.resolved_output_dir();
    let json = dir.join("report.json");
    let csv = dir.join("metrics.csv");
    report.artifacts = vec![json.clone(), csv.clone()];
    write_csv(&csv, &report.rows("none", ""))?;
    write_json(&json, &report)?;
    Ok(report)
}

/// `Err(ChecksFailed)` when any hard check failed.
pub fn enforce(checks: &[CheckResult]) -> LabResult<()> {
    for c in checks.iter().filter(|c| !c.passed) {
        log::warn!("check {} failed: {}", c.name, c.detail);
    }
    match hard_failures(checks) {
        0 => Ok(()),
        n => Err(LabError::ChecksFailed(n)),
    }
}
