use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("raw monodromy products are capped at n = {max} (requested {requested}); use cocycle::singular_spectrum")]
    MonodromyGuard { requested: usize, max: usize },

    #[error(
        "unstable direction not converged at preorbit length {length}: angle change {angle:e} rad"
    )]
    Accuracy { length: usize, angle: f64 },

    #[error("orbit continuation failed: {0}")]
    Continuation(String),

    #[error("periodic orbit is numerically non-hyperbolic (min |log2|eigenvalue|| = {0:e})")]
    NonHyperbolicOrbit(f64),
}

impl Error {
    /// True for failures of a numerical procedure, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Convergence { .. }
                | Error::Accuracy { .. }
                | Error::Continuation(_)
                | Error::NonHyperbolicOrbit(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
