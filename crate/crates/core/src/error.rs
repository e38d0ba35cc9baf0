use thiserror::Error;

/// Errors produced by the solvers and the I/O layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("field does not match lattice: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    CgNotConverged { iterations: usize, residual: f64 },

    #[error("eigensolver did not converge: best Rayleigh quotient {rayleigh:.10e}, residual {residual:.3e}")]
    EigenNotConverged { rayleigh: f64, residual: f64 },

    #[error("eigenvalue count ambiguous: eigenvalue {eigenvalue:.10e} lies within {residual:.3e} of threshold {threshold:.10e}")]
    AmbiguousCount {
        eigenvalue: f64,
        residual: f64,
        threshold: f64,
    },

    #[error("too many holes in carved set: {0} (limit 64)")]
    TooManyHoles(usize),

    #[error("could not draw a generic polynomial after {0} resamples")]
    NotGeneric(usize),

    #[error("mu grid does not bracket the minimum; extend mu grid (argmin at index {index} of {len})")]
    UnbracketedFiber { index: usize, len: usize },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
