use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("wave function and potential live on different grids")]
    GridMismatch,

    #[error("non-finite amplitude after step {step} (t = {time:e} s); the evolution is unstable")]
    NonFinite { step: usize, time: f64 },

    #[error("state has zero norm; moments are undefined")]
    ZeroNorm,

    #[error("reset state has negligible norm ({norm_sq:e}); the detector does not overlap the state")]
    ZeroOverlap { norm_sq: f64 },

    #[error("grid does not represent the packet: {0}")]
    PacketNotRepresented(String),

    #[error("no detection: detector never fires for this configuration")]
    NoDetection,

    #[error("momentum distribution has {mass:e} probability at p <= 0; the classical and Kijowski references need a right-moving packet")]
    NegativeMomentum { mass: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("quadrature not converged: relative change {change:e} exceeds {tolerance:e}")]
    Unconverged { change: f64, tolerance: f64 },

    #[error("self-convergence check failed for {what}: relative change {change:e} exceeds {tolerance:e}")]
    ConvergenceFailed {
        what: String,
        change: f64,
        tolerance: f64,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
