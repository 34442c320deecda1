use std::path::PathBuf;

use sgg_fusion_core::debias::DebiasError;
use sgg_fusion_core::fusion::FusionError;
use sgg_fusion_core::metrics::MetricError;
use sgg_fusion_core::synthgen::SynthError;
use sgg_fusion_core::trainer::TrainError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    /// Bad configuration or arguments, detected before any work starts.
    #[error("invalid `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed file at `{field}`: {reason}")]
    Format {
        path: PathBuf,
        field: String,
        reason: String,
    },
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Debias(#[from] DebiasError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

impl LabError {
    pub fn invalid(key: impl Into<String>, reason: impl Into<String>) -> Self {
        LabError::Invalid {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, field: impl Into<String>, reason: impl ToString) -> Self {
        LabError::Format {
            path: path.into(),
            field: field.into(),
            reason: reason.to_string(),
        }
    }

    /// 1 for validation failures, 2 for everything that went wrong while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Invalid { .. } => 1,
            LabError::Synth(SynthError::Config { .. }) => 1,
            LabError::Fusion(FusionError::Config(_)) => 1,
            LabError::Train(TrainError::Config(_)) => 1,
            _ => 2,
        }
    }
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;

pub(crate) fn read(path: &std::path::Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| LabError::io(path, e))
}

pub(crate) fn write(path: &std::path::Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| LabError::io(path, e))
}
