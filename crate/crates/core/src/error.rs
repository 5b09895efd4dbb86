use crate::lattice::ModeIndex;

/// Errors raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("mode {0} is not a member of the set")]
    ModeNotInSet(ModeIndex),

    #[error("no extension chain reaches {unreached:?} within the window")]
    NoChainFound { unreached: Vec<ModeIndex> },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("blowup detected at t = {time}: norm {norm:.3e} exceeds guard {guard:.3e}")]
    BlowupDetected { time: f64, norm: f64, guard: f64 },

    #[error("Picard iteration failed to contract at t = {time} (update {update:.3e})")]
    ContractionFailure { time: f64, update: f64 },

    #[error("boot allocation failed: {0}")]
    BootAllocation(String),

    #[error("frame vectors are not linearly independent")]
    FrameNotIndependent,

    #[error("frame lift is ill-conditioned (condition number {0:.3e})")]
    FrameConditioning(f64),

    #[error("mode {0} is not expressible from the controlled set")]
    NotExpressible(ModeIndex),

    #[error("input outside the ball: norm {norm:.4} > radius {radius:.4}")]
    OutsideBall { norm: f64, radius: f64 },

    #[error("replay differs from the recorded run: {0}")]
    ReplayMismatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
