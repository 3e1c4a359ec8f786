use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use blackhole_core::attack::AttackMode;
use blackhole_core::defense::DefenseSpec;
use blackhole_core::DistanceMetric;
use blackhole_lab::config::{read_json, ExperimentConfig, SweepAxis, OUTPUT_ROOT_ENV};
use blackhole_lab::error::{LabError, LabResult};
use blackhole_lab::experiment::{enforce, run_attack_experiment};
use blackhole_lab::geometry_tools::{run_and_write_cdf, run_and_write_hubness, CdfConfig, HubnessConfig};
use blackhole_lab::report::RunReport;
use blackhole_lab::sweep::run_and_write_sweep;
use blackhole_lab::theory_suite::{run_and_write_theory, TheorySuiteConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Black-Hole poisoning experiments on synthetic or loaded embedding corpora.
#[derive(Parser)]
#[command(name = "blackhole-lab", version)]
struct Cli {
    /// Default root for relative output directories.
    #[arg(long, env = OUTPUT_ROOT_ENV, global = true)]
    output_root: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clean baseline, attack and metrics for one configuration.
    Attack(ExperimentArgs),
    /// Like `attack`, with a defense evaluated on the poisoned corpus.
    Defend {
        #[command(flatten)]
        args: ExperimentArgs,
        #[arg(long, value_enum)]
        defense: Option<DefenseArg>,
        /// Neighbours used by TCPR.
        #[arg(long, default_value_t = 10)]
        kappa: usize,
    },
    /// Repeats the experiment over one axis.
    Sweep {
        #[command(flatten)]
        args: ExperimentArgs,
        #[arg(long, value_enum, requires = "values")]
        axis: Option<AxisArg>,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
    },
    /// Theorem condition and Monte-Carlo checks over spectra and sizes.
    Theory {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Hubness probability grid on synthetic corpora.
    Hubness(CommonArgs),
    /// Distance-to-centroid CDF and black-hole radius.
    Cdf {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        metric: Option<DistanceMetric>,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Print the resolved config and exit.
    #[arg(long)]
    emit_config: bool,
    /// Exit with code 4 when a check fails.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Cluster count for the cluster-wise attack.
    #[arg(long, conflicts_with = "global")]
    clusters: Option<usize>,
    /// Use the global-centroid attack.
    #[arg(long)]
    global: bool,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    metric: Option<DistanceMetric>,
    /// Comma-separated K values.
    #[arg(long, value_delimiter = ',')]
    k: Vec<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DefenseArg {
    None,
    Cl2,
    Zscore,
    Tcpr,
    Detection,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Alpha,
    K,
    Clusters,
    Metric,
}

fn experiment_config(args: &ExperimentArgs) -> LabResult<ExperimentConfig> {
    let mut cfg = match &args.common.config {
        Some(path) => read_json(path)?,
        None if args.common.emit_config => ExperimentConfig::example(),
        None => return Err(LabError::config("--config is required")),
    };
    if let Some(name) = &args.name {
        cfg.name = name.clone();
    }
    if let Some(seed) = args.common.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &args.common.output_dir {
        cfg.output_dir = Some(dir.clone());
    }
    if let Some(alpha) = args.alpha {
        cfg.attack.alpha = alpha;
    }
    if let Some(clusters) = args.clusters {
        cfg.attack.mode = AttackMode::ClusterWise { clusters };
    }
    if args.global {
        cfg.attack.mode = AttackMode::Global;
    }
    if let Some(sigma) = args.sigma {
        cfg.attack.sigma = Some(sigma);
    }
    if let Some(metric) = args.metric {
        cfg.metric = metric;
    }
    if !args.k.is_empty() {
        cfg.k = args.k.clone();
    }
    Ok(cfg)
}

fn parse_values<T: std::str::FromStr>(values: &[String]) -> LabResult<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    values
        .iter()
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|e| LabError::config(format!("axis value '{v}': {e}")))
        })
        .collect()
}

fn emit<T: serde::Serialize>(cfg: &T) -> LabResult<()> {
    let text = serde_json::to_string_pretty(cfg).map_err(|e| LabError::config(e.to_string()))?;
    // a closed pipe (e.g. `| head`) is not an error here
    let _ = writeln!(std::io::stdout().lock(), "{text}");
    Ok(())
}

fn summarize(report: &RunReport) {
    for m in &report.attacked {
        let clean = report.clean_at(m.k).and_then(|c| c.recall_at_k).unwrap_or(f64::NAN);
        println!(
            "K={:<3} clean R@K {:.4}  MO@K {:.4}  ASR {:.4}  mean FPR {}",
            m.k,
            clean,
            m.mo_at_k,
            m.asr,
            m.mean_fpr.map_or("-".to_string(), |f| format!("{f:.2}"))
        );
    }
    if let Some(d) = &report.defense {
        println!(
            "defense {}: MO@{} {:.4} -> {:.4}, utility R@{} {:.4}",
            d.defense.name(),
            d.defended.k,
            d.undefended.mo_at_k,
            d.defended.mo_at_k,
            d.defended.k,
            d.utility_recall
        );
    }
    if let Some(t) = &report.theorem {
        println!("condition: lhs {:.3} rhs {:.3} holds {}", t.lhs, t.rhs, t.holds);
    }
    for a in &report.artifacts {
        println!("wrote {}", a.display());
    }
}

fn run(cli: Cli) -> LabResult<()> {
    if let Some(root) = &cli.output_root {
        std::env::set_var(OUTPUT_ROOT_ENV, root);
    }
    match cli.command {
        Command::Attack(args) => {
            let cfg = experiment_config(&args)?;
            if args.common.emit_config {
                return emit(&cfg);
            }
            cfg.validate()?;
            let report = run_attack_experiment(&cfg)?;
            summarize(&report);
            if args.common.check {
                enforce(&report.checks)?;
            }
        }
        Command::Defend { args, defense, kappa } => {
            let mut cfg = experiment_config(&args)?;
            if let Some(d) = defense {
                cfg.defense = Some(match d {
                    DefenseArg::None => DefenseSpec::None,
                    DefenseArg::Cl2 => DefenseSpec::CenteredL2,
                    DefenseArg::Zscore => DefenseSpec::ZScore,
                    DefenseArg::Tcpr => DefenseSpec::Tcpr { kappa },
                    DefenseArg::Detection => DefenseSpec::Detection {
                        clusters: blackhole_core::clustering::DEFAULT_CLUSTERS,
                        k: blackhole_core::defense::DEFAULT_DETECTION_K,
                    },
                });
            }
            if args.common.emit_config {
                return emit(&cfg);
            }
            if cfg.defense.is_none() {
                return Err(LabError::config("defend needs a defense (config 'defense' or --defense)"));
            }
            cfg.validate()?;
            let report = run_attack_experiment(&cfg)?;
            summarize(&report);
            if args.common.check {
                enforce(&report.checks)?;
            }
        }
        Command::Sweep { args, axis, values } => {
            let mut cfg = experiment_config(&args)?;
            if let Some(axis) = axis {
                cfg.sweep = Some(match axis {
                    AxisArg::Alpha => SweepAxis::Alpha { values: parse_values(&values)? },
                    AxisArg::K => SweepAxis::K { values: parse_values(&values)? },
                    AxisArg::Clusters => SweepAxis::Clusters { values: parse_values(&values)? },
                    AxisArg::Metric => SweepAxis::Metric { values: parse_values(&values)? },
                });
            }
            if args.common.emit_config {
                return emit(&cfg);
            }
            cfg.validate()?;
            let axis = cfg
                .sweep
                .clone()
                .ok_or_else(|| LabError::config("sweep needs an axis (config 'sweep' or --axis)"))?;
            let report = run_and_write_sweep(&cfg, &axis)?;
            for (cell, mo) in report.cells.iter().zip(report.mo_at_k()) {
                match (&cell.error, mo) {
                    (Some(e), _) => println!("{} = {:<10} failed: {e}", report.axis, cell.value),
                    (None, Some(mo)) => println!("{} = {:<10} MO@K {mo:.4}", report.axis, cell.value),
                    (None, None) => println!("{} = {:<10} {} hubness entries", report.axis, cell.value, cell.hubness.len()),
                }
            }
            for c in &report.checks {
                println!("{}: {} ({})", c.name, if c.passed { "ok" } else { "violated" }, c.detail);
            }
            if args.common.check {
                enforce(&report.checks)?;
            }
        }
        Command::Theory { common, delta, trials } => {
            let path = common
                .config
                .as_ref()
                .ok_or_else(|| LabError::config("--config is required"))?;
            let mut cfg = TheorySuiteConfig::load(path)?;
            if let Some(d) = delta {
                cfg.delta = d;
            }
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            if let Some(dir) = common.output_dir {
                cfg.output_dir = Some(dir);
            }
            if common.emit_config {
                return emit(&cfg);
            }
            let report = run_and_write_theory(&cfg)?;
            for r in &report.rows {
                println!(
                    "{} n={}: lhs {:.3} rhs {:.3} holds {} fraction {}",
                    r.spectrum,
                    r.n,
                    r.check.lhs,
                    r.check.rhs,
                    r.check.holds,
                    r.fraction.map_or("-".to_string(), |f| format!("{f:.4}"))
                );
            }
            for c in &report.reference {
                println!("reference: lhs {:.3} rhs {:.3} holds {}", c.lhs, c.rhs, c.holds);
            }
            if common.check {
                enforce(&report.checks)?;
            }
        }
        Command::Hubness(common) => {
            let path = common
                .config
                .as_ref()
                .ok_or_else(|| LabError::config("--config is required"))?;
            let mut cfg: HubnessConfig = read_json(path)?;
            if let Some(s) = common.seed {
                cfg.sweep.seed = s;
            }
            if let Some(dir) = common.output_dir {
                cfg.output_dir = Some(dir);
            }
            if common.emit_config {
                return emit(&cfg);
            }
            let report = run_and_write_hubness(&cfg)?;
            for e in &report.entries {
                println!(
                    "d={} n={} {} {:?} {:?}: {:.4}",
                    e.dim, e.corpus_size, e.metric, e.scope, e.population, e.probability
                );
            }
        }
        Command::Cdf { common, metric } => {
            let path = common
                .config
                .as_ref()
                .ok_or_else(|| LabError::config("--config is required"))?;
            let mut cfg: CdfConfig = read_json(path)?;
            if let Some(m) = metric {
                cfg.metric = m;
            }
            if let Some(dir) = common.output_dir {
                cfg.output_dir = Some(dir);
            }
            if common.emit_config {
                return emit(&cfg);
            }
            let report = run_and_write_cdf(&cfg)?;
            println!("black-hole radius: {}", serde_json::to_string(&report.radius).unwrap_or_default());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
