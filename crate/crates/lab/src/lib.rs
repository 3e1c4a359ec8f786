//! Config-driven experiments on top of `blackhole-core`: attack runs,
//! parameter sweeps, theorem suites, CDFs and hubness grids, each written as
//! JSON plus long-format CSV.

pub mod config;
pub mod error;
pub mod experiment;
pub mod geometry_tools;
pub mod mixture;
pub mod report;
pub mod sweep;
pub mod theory_suite;

pub use config::ExperimentConfig;
pub use error::{LabError, LabResult};
pub use experiment::{run_attack_experiment, PreparedExperiment};
pub use report::RunReport;
