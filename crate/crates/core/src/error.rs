use thiserror::Error;

/// Errors raised by the physics library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("near-singular orientation: |sin beta| = {sin_beta:.3e} below {threshold:.1e}")]
    SingularOrientation { sin_beta: f64, threshold: f64 },

    #[error("step size underflow at t = {t:.6e} s (h = {h:.3e} s)")]
    StepUnderflow { t: f64, h: f64 },

    #[error(
        "Newton iteration did not converge after {iterations} iterations (residual {residual:.3e})"
    )]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("unstable block {block}: {detail}")]
    Unstable { block: String, detail: String },

    #[error("unavailable: {0}")]
    Unavailable(String),

    #[error("numerical instability in mode {mode}: {detail}")]
    StiffMode { mode: String, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;
