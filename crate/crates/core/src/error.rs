use thiserror::Error;

/// Failures surfaced by every module of the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("radii ratio L = {0} outside the admissible range")]
    RatioOutOfRange(f64),
    #[error("reference domains are fixed at R = 1, L = 2")]
    ReferenceFixed,
    #[error("resolution too small: {0}")]
    ResolutionTooSmall(String),
    #[error("sigma = {0} outside (0, 1/8] or too large for the annulus")]
    SigmaOutOfRange(f64),
    #[error("exponent q = {0} outside (1, inf)")]
    QOutOfRange(f64),
    #[error("frame mismatch: {0}")]
    FrameMismatch(String),
    #[error("domain mismatch: {0}")]
    DomainMismatch(String),
    #[error("input field does not vanish on the boundary (relative trace {0:.3e})")]
    BoundaryViolation(f64),
    #[error("datum has nonzero mean (|mean integral| / L1 norm = {0:.3e})")]
    NonZeroMean(f64),
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("no convergence after {iterations} iterations (last relative change {change:.3e})")]
    NoConvergence { iterations: usize, change: f64 },
    #[error("delta = {0} outside [0, 1]")]
    DeltaOutOfRange(String),
    #[error("grid does not cover the cutoff support: {0}")]
    SupportNotCovered(String),
    #[error("unsupported domain for this operation: {0}")]
    UnsupportedDomain(String),
    #[error("invalid configuration field `{field}`: {message}")]
    ConfigInvalid { field: String, message: String },
    #[error("i/o failure: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
