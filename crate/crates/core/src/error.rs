use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by the discovery library.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid dimension for {what}: need {need}, got {got}")]
    InvalidDimension {
        what: &'static str,
        need: usize,
        got: usize,
    },

    #[error("dimension mismatch in {what}: {left} vs {right}")]
    DimensionMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("time grid must be uniform and strictly increasing")]
    NonUniformGrid,

    #[error("noise standard deviation must be nonnegative, got {0}")]
    NegativeNoiseStd(f64),

    #[error("unknown system '{name}'; valid names: {valid}")]
    UnknownSystem { name: String, valid: String },

    #[error("simulation diverged at t = {time:.6}")]
    Divergence { time: f64 },

    #[error("library matrix is degenerate (rank 0); cannot project")]
    DegenerateLibrary,

    #[error("{what} is rank deficient; reduce the library degree or add samples")]
    RankDeficient { what: &'static str },

    #[error("cone solver returned {status} while {context}")]
    Solver {
        status: String,
        context: &'static str,
    },

    #[error("non-finite residual encountered at lambda = {lambda:.6e}")]
    NonFiniteResidual { lambda: f64 },

    #[error("relative error undefined: reference vector has zero norm")]
    ZeroReference,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
