use std::path::PathBuf;

use thiserror::Error;

pub type LabResult<T> = std::result::Result<T, LabError>;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("config: {0}")]
    Config(String),
    #[error("reading {path}: {source}")]
    ConfigRead {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: blackhole_core::Error,
    },
    #[error("{0} check(s) failed")]
    ChecksFailed(usize),
}

impl LabError {
    pub fn config(msg: impl Into<String>) -> Self {
        LabError::Config(msg.into())
    }

    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) | LabError::ConfigRead { .. } => 2,
            LabError::Stage { .. } => 3,
            LabError::ChecksFailed(_) => 4,
        }
    }
}

/// Attaches a pipeline stage name to core errors.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> LabResult<T>;
}

impl<T> StageExt<T> for blackhole_core::Result<T> {
    fn stage(self, stage: &'static str) -> LabResult<T> {
        self.map_err(|source| LabError::Stage { stage, source })
    }
}
