use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dyadic level {0} exceeds the supported maximum of 62")]
    LevelOverflow(u32),

    #[error("position {position} is out of range for level {level}")]
    InvalidPosition { level: u32, position: u64 },

    #[error("resolution {requested} is too small: need at least {required}")]
    ResolutionTooSmall { requested: u32, required: u32 },

    #[error("resolution {requested} exceeds the cap of {cap}")]
    ResolutionCap { requested: u32, cap: u32 },

    #[error("function has nonzero mean and is not in the span of the Haar functions")]
    NonzeroMean,

    #[error("numeric mode mismatch: expected {expected}, found {found}")]
    ModeMismatch { expected: &'static str, found: String },

    #[error("universe mismatch: expected n_max {expected}, found {found}")]
    UniverseMismatch { expected: u32, found: u32 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("sub-sigma-algebra of component {component} is not contained in its component algebra")]
    Containment { component: u32 },

    #[error("invalid frequencies: {0}")]
    InvalidFrequencies(String),

    #[error("invalid faithful system: {0}")]
    InvalidSystem(String),

    #[error("pattern violates ancestor closure at {0}")]
    ClosureViolation(String),

    #[error("hypothesis failed at {index}: {reason}")]
    Hypothesis { index: String, reason: String },

    #[error("matrix is singular")]
    Singular,

    #[error("spectral condition violated: c^-1 * residual = {0} >= 1")]
    SpectralCondition(f64),

    #[error("stage {stage} failed: {reason}")]
    Stage { stage: String, reason: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
