//! Experiment configuration documents.

use std::path::{Path, PathBuf};

use blackhole_core::attack::{AttackConfig, AttackMode};
use blackhole_core::corpus::CorpusFormat;
use blackhole_core::defense::DefenseSpec;
use blackhole_core::evaluation::HubnessSweep;
use blackhole_core::index::{IndexKind, IndexParams, TuneSchedule};
use blackhole_core::synthgen::{Basis, SpectrumDoc};
use blackhole_core::DistanceMetric;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{LabError, LabResult};

/// Environment variable naming the directory that relative output paths are
/// resolved against.
pub const OUTPUT_ROOT_ENV: &str = "BLACKHOLE_OUTPUT_ROOT";
pub const DEFAULT_QUERY_COUNT: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub corpus: CorpusSource,
    #[serde(default)]
    pub queries: QuerySource,
    /// Distance used for clustering, search and metrics.
    #[serde(default = "default_metric")]
    pub metric: DistanceMetric,
    #[serde(default)]
    pub index: IndexChoice,
    pub attack: AttackConfig,
    #[serde(default)]
    pub defense: Option<DefenseSpec>,
    #[serde(default = "default_k")]
    pub k: Vec<usize>,
    /// Seed for index construction and defenses.
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Failure probability used for the theorem check on synthetic corpora.
    #[serde(default = "default_delta")]
    pub theory_delta: f64,
    #[serde(default)]
    pub checks: Checks,
    /// Axis for the `sweep` subcommand.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepAxis>,
}

fn default_name() -> String {
    "experiment".to_string()
}

fn default_metric() -> DistanceMetric {
    DistanceMetric::Cosine
}

fn default_k() -> Vec<usize> {
    vec![10]
}

fn default_delta() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum CorpusSource {
    File {
        path: PathBuf,
        /// Inferred from the extension when absent.
        #[serde(default)]
        format: Option<CorpusFormat>,
    },
    Synthetic(SyntheticCorpus),
}

/// A Gaussian corpus, optionally with satellite components that share the
/// core covariance but sit at shifted means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticCorpus {
    pub size: usize,
    pub spectrum: SpectrumDoc,
    /// Norm of a random core mean, in units of `sqrt(trace)`. Exclusive with
    /// an explicit `spectrum.mean`.
    #[serde(default)]
    pub mean_scale: f64,
    #[serde(default)]
    pub satellites: Vec<Satellite>,
    #[serde(default)]
    pub basis: Basis,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Satellite {
    /// Fraction of records drawn from this component.
    pub weight: f64,
    /// Distance of its mean from the core mean, in units of `sqrt(trace)`.
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum QuerySource {
    /// Fresh draws from the synthetic corpus distribution.
    Synthetic {
        count: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
    File {
        path: PathBuf,
        #[serde(default)]
        format: Option<CorpusFormat>,
    },
    /// The last `count` corpus records, removed from the corpus.
    HeldOut { count: usize },
}

impl Default for QuerySource {
    fn default() -> Self {
        QuerySource::Synthetic {
            count: DEFAULT_QUERY_COUNT,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum IndexChoice {
    Fixed {
        params: IndexParams,
    },
    /// Pick the cheapest setting reaching `target` recall on the clean corpus.
    Tune {
        kind: IndexKind,
        target: f64,
        #[serde(default)]
        schedule: TuneSchedule,
    },
}

impl Default for IndexChoice {
    fn default() -> Self {
        IndexChoice::Fixed {
            params: IndexParams::Flat,
        }
    }
}

/// Thresholds evaluated after a run; `--check` turns a miss into exit code 4.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checks {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_mo_at_k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_asr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_defended_mo_at_k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_clean_recall: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_utility_recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", rename_all = "snake_case")]
pub enum SweepAxis {
    Alpha { values: Vec<f64> },
    K { values: Vec<usize> },
    Clusters { values: Vec<usize> },
    Metric { values: Vec<DistanceMetric> },
    Grid(HubnessSweep),
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Alpha { .. } => "alpha",
            SweepAxis::K { .. } => "k",
            SweepAxis::Clusters { .. } => "clusters",
            SweepAxis::Metric { .. } => "metric",
            SweepAxis::Grid(_) => "grid",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SweepAxis::Alpha { values } => values.len(),
            SweepAxis::K { values } => values.len(),
            SweepAxis::Clusters { values } => values.len(),
            SweepAxis::Metric { values } => values.len(),
            SweepAxis::Grid(g) => {
                g.dims.len() * g.sizes.len() * g.metrics.len() * g.scopes.len() * g.populations.len()
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ExperimentConfig {
    /// A cluster-wise attack on a synthetic power-law corpus, used by
    /// `--emit-config` when no file is given.
    pub fn example() -> Self {
        let spectrum = SpectrumDoc::power_law(128, 0.1);
        ExperimentConfig {
            name: default_name(),
            corpus: CorpusSource::Synthetic(SyntheticCorpus {
                size: 10_000,
                spectrum,
                mean_scale: 0.3,
                satellites: vec![],
                basis: Basis::Axis,
                seed: 1,
            }),
            queries: QuerySource::default(),
            metric: default_metric(),
            index: IndexChoice::default(),
            attack: AttackConfig::new(AttackMode::ClusterWise { clusters: 20 }, 0.01, 2),
            defense: None,
            k: default_k(),
            seed: 3,
            output_dir: None,
            theory_delta: default_delta(),
            checks: Checks::default(),
            sweep: None,
        }
    }

    pub fn load(path: &Path) -> LabResult<Self> {
        let cfg: ExperimentConfig = read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> LabResult<()> {
        if self.k.is_empty() || self.k.contains(&0) {
            return Err(LabError::config("k values must be a nonempty list of positive counts"));
        }
        self.attack
            .validate()
            .map_err(|e| LabError::config(format!("attack: {e}")))?;
        if !(self.theory_delta > 0.0 && self.theory_delta < 1.0) {
            return Err(LabError::config("theory_delta must lie in (0, 1)"));
        }
        if let CorpusSource::Synthetic(s) = &self.corpus {
            s.validate()?;
        }
        match &self.queries {
            QuerySource::Synthetic { count, .. } | QuerySource::HeldOut { count } if *count == 0 => {
                return Err(LabError::config("query count must be positive"));
            }
            QuerySource::Synthetic { .. } if !matches!(self.corpus, CorpusSource::Synthetic(_)) => {
                return Err(LabError::config(
                    "synthetic queries need a synthetic corpus; use file or held_out queries",
                ));
            }
            _ => {}
        }
        if let IndexChoice::Tune { target, .. } = &self.index {
            if !(*target > 0.0 && *target <= 1.0) {
                return Err(LabError::config("tuning target must lie in (0, 1]"));
            }
        }
        if let Some(axis) = &self.sweep {
            if axis.is_empty() {
                return Err(LabError::config(format!("sweep axis '{}' has no values", axis.name())));
            }
        }
        Ok(())
    }

    /// The first configured K; defenses are evaluated at this depth.
    pub fn primary_k(&self) -> usize {
        self.k[0]
    }

    pub fn max_k(&self) -> usize {
        *self.k.iter().max().expect("validated nonempty")
    }

    pub fn resolved_output_dir(&self) -> PathBuf {
        resolve_output_dir(self.output_dir.as_deref(), &self.name)
    }
}

/// `dir` resolved against the output root, or `<root>/<name>` when absent.
/// The root is [`OUTPUT_ROOT_ENV`] when set, otherwise `results`.
pub fn resolve_output_dir(dir: Option<&Path>, name: &str) -> PathBuf {
    let root = std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("results"));
    match dir {
        Some(p) if p.is_absolute() => p.to_path_buf(),
        Some(p) => root.join(p),
        None => root.join(name),
    }
}

impl SyntheticCorpus {
    pub fn validate(&self) -> LabResult<()> {
        if self.size == 0 {
            return Err(LabError::config("synthetic corpus size must be positive"));
        }
        if self.mean_scale != 0.0 && self.spectrum.mean.is_some() {
            return Err(LabError::config("give either spectrum.mean or mean_scale, not both"));
        }
        if !(self.mean_scale >= 0.0 && self.mean_scale.is_finite()) {
            return Err(LabError::config("mean_scale must be finite and >= 0"));
        }
        let total: f64 = self.satellites.iter().map(|s| s.weight).sum();
        if self.satellites.iter().any(|s| !(s.weight > 0.0) || !(s.offset >= 0.0)) || total >= 1.0 {
            return Err(LabError::config(
                "satellite weights must be positive and sum below 1; offsets must be >= 0",
            ));
        }
        Ok(())
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> LabResult<T> {
    let text = std::fs::read_to_string(path).map_err(|source| LabError::ConfigRead {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| LabError::config(format!("{}: {e}", path.display())))
}

pub(crate) fn format_for(path: &Path, format: Option<CorpusFormat>) -> LabResult<CorpusFormat> {
    match format {
        Some(f) => Ok(f),
        None => CorpusFormat::from_path(path).ok_or_else(|| {
            LabError::config(format!("cannot infer the format of {}; set 'format'", path.display()))
        }),
    }
}
