use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("state vector has zero norm")]
    ZeroNorm,

    #[error("post-measurement norm underflow")]
    NormUnderflow,

    #[error("trajectory aborted at step {step}: {source}")]
    TrajectoryAborted { step: usize, source: Box<Error> },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("noise penalty undefined: gamma = 0 with nonzero noise controls")]
    UndefinedNoise,

    #[error("extremal trajectory diverged at t = {t}: {reason}")]
    Diverged { t: f64, reason: String },

    #[error("shooting found no solution; best residual {best_residual:e}")]
    NoSolution { best_residual: f64 },

    #[error("post-selection bin is empty; occupancy per decile {occupancy:?}")]
    EmptyBin { occupancy: Vec<usize> },

    #[error("{aborted} of {total} trajectories aborted")]
    TooManyAborts { aborted: usize, total: usize },

    #[error("vertex catalog line {line}: {msg}")]
    Catalog { line: usize, msg: String },

    #[error("oscillation/saturation classifier is ambiguous on the whole grid")]
    AmbiguousTransition,
}
