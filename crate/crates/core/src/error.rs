use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("alpha = {0} is outside the open interval (0, pi/6)")]
    InvalidAlpha(f64),

    #[error("angle {0} is outside [0, pi]")]
    AngleOutOfRange(f64),

    #[error("branch index {0} is not one of 1, 2, 3, 4")]
    InvalidBranch(u32),

    #[error("cotangent is undefined at theta = {0}")]
    CotangentUndefined(f64),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("empty cylinder word")]
    EmptyWord,

    #[error("projected atom count {projected} exceeds cap {cap}")]
    AtomCapExceeded { projected: usize, cap: usize },

    #[error("trajectory hit a corner of the cell at ({0}, {1})")]
    CornerHit(f64, f64),

    #[error("tracer exceeded {0} bounces without returning to the open side")]
    TracerStuck(u32),

    #[error("{unclassified} of {samples} exits matched no exit branch")]
    BranchMismatch { unclassified: u64, samples: u64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
