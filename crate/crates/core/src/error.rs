use std::path::PathBuf;

/// Errors produced anywhere in the key generation and analysis pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("reflect padding {padding} too large for kernel {kernel}")]
    InvalidPadding { padding: usize, kernel: usize },
    #[error("instance norm needs at least two spatial elements per slice")]
    DegenerateNorm,
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("tape already consumed by a previous backward pass")]
    StaleTape,
    #[error("parameter `{0}` has no gradient")]
    MissingGradient(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("resolution {0} must be a positive multiple of 4")]
    InvalidResolution(usize),
    #[error("resolution mismatch: expected {expected}x{expected}, got {width}x{height}")]
    ResolutionMismatch { expected: usize, width: usize, height: usize },
    #[error("image set is empty: {0}")]
    EmptyDomain(String),
    #[error("training diverged at iteration {iteration}: l_g={l_g}, l_d={l_d}")]
    Divergence { iteration: u64, l_g: f64, l_d: f64 },

    #[error("index {index} out of range for length {len}")]
    OutOfRange { index: usize, len: usize },
    #[error("integrity check failed: {0}")]
    Integrity(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid chaotic map parameters: {0}")]
    InvalidChaosParams(String),
    #[error("invalid key: {0}")]
    InvalidKey(String),

    #[error("empty input")]
    EmptyInput,
    #[error("zero variance in {0} series")]
    DegenerateSeries(&'static str),
    #[error("insufficient data for {test}: need {needed} bits, got {got}")]
    InsufficientData { test: &'static str, needed: usize, got: usize },
    #[error("random walk never returns to zero")]
    NoCycles,

    #[error("identity violated: {0}")]
    IdentityViolation(String),
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for failures caused by numerical blow-up rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Divergence { .. } | Error::NonFinite(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
