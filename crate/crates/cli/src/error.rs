use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const RUNTIME: i32 = 1;
    pub const INVALID_INPUT: i32 = 2;
    pub const NOT_CONVERGED: i32 = 3;
    pub const PHYSICAL_WARNING: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {message}", path.display())]
    Config { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(qpassage::Error),
    #[error("{0}")]
    Numerical(qpassage::Error),
    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } | Self::Invalid(_) => exit::INVALID_INPUT,
            Self::Numerical(qpassage::Error::ConvergenceFailed { .. }) => exit::NOT_CONVERGED,
            Self::Numerical(_) | Self::Io { .. } => exit::RUNTIME,
        }
    }
}

impl From<qpassage::Error> for CliError {
    fn from(e: qpassage::Error) -> Self {
        use qpassage::Error as E;
        match e {
            E::InvalidGrid(_)
            | E::InvalidParameter { .. }
            | E::GridMismatch
            | E::PacketNotRepresented(_)
            | E::NegativeMomentum { .. } => Self::Invalid(e),
            _ => Self::Numerical(e),
        }
    }
}
