use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// Numerical evidence (a failed check, a validation violation) is never an
/// error; these variants are reserved for operations that cannot produce a
/// result at all.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("syntax error at byte {position}: {message}")]
    Syntax { position: usize, message: String },

    #[error("variable x{index} exceeds arity {arity}")]
    Arity { index: usize, arity: usize },

    #[error("expected {expected} components, found {found}")]
    ComponentCount { expected: usize, found: usize },

    #[error("domain error in `{node}` at {point:?}")]
    Domain { node: String, point: Vec<f64> },

    #[error("singular Jacobian at {point:?}: det = {det:e}")]
    SingularJacobian { point: Vec<f64>, det: f64 },

    #[error("Newton inversion did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("grid functions live on different grids")]
    GridMismatch,

    #[error("support error: {0}")]
    Support(String),

    #[error("config error at `{path}`: {reason}")]
    Config { path: String, reason: String },
}

impl Error {
    pub fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
