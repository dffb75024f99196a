use std::path::{Path, PathBuf};

use dualsim_core::coordinator::SimError;
use dualsim_core::swf::SwfError;
use dualsim_core::trace::TraceError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Parse(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 1 config, 2 input parse, 3 internal invariant violation.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 1,
            CliError::Parse(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        if e.is_internal() {
            CliError::Internal(e.to_string())
        } else if matches!(e, SimError::TaskGen(_)) {
            CliError::Parse(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

impl From<SwfError> for CliError {
    fn from(e: SwfError) -> Self {
        match e {
            SwfError::BadSpan(_) => CliError::Config(e.to_string()),
            _ => CliError::Parse(e.to_string()),
        }
    }
}

impl From<TraceError> for CliError {
    fn from(e: TraceError) -> Self {
        CliError::Internal(e.to_string())
    }
}
