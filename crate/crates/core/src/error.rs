use thiserror::Error;

/// Errors produced by model construction, periodic solves and integration.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("negative transfer rate sigma[{species}][{to},{from}] = {value} at theta = {theta}")]
    NegativeRate {
        species: char,
        to: usize,
        from: usize,
        value: f64,
        theta: f64,
    },

    #[error("spectral hypothesis violated: {0}")]
    SpectralHypothesis(String),

    #[error("Id - R(T,0) numerically singular (condition estimate {cond:.3e})")]
    SingularMonodromy { cond: f64 },

    #[error("monodromy spectral radius {rho} >= 1; periodic solves undefined")]
    ExpandingMonodromy { rho: f64 },

    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },

    #[error("Newton iteration failed at step {step} (t = {t}): residual {residual:.3e} after {iters} iterations")]
    NewtonDivergence {
        step: usize,
        t: f64,
        residual: f64,
        iters: usize,
    },

    #[error("trajectory left the ball of radius {alpha} at t = {t} (norm {norm:.3e})")]
    DomainViolation { t: f64, alpha: f64, norm: f64 },

    #[error("fixed-point iteration is not contracting (factor {factor:.3e}); epsilon too large")]
    NonContraction { factor: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unknown preset '{0}'")]
    UnknownPreset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
