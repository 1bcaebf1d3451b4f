use thiserror::Error;

/// Errors shared by every solver and study in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain stated by the operation contract.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value is inconsistent (grid sizes, CFL bound, keys).
    #[error("config error: {0}")]
    Config(String),

    /// A user-supplied coefficient returned a non-finite value.
    #[error("evaluation error: {0}")]
    Eval(String),

    /// Every candidate control evaluated to a non-finite Hamiltonian.
    #[error("minimization error: {0}")]
    Minimization(String),

    /// A backward march produced a non-finite value.
    #[error("divergence at layer {layer}: {detail}")]
    Divergence { layer: usize, detail: String },

    /// A simulated path left the finite range.
    #[error("state blow-up on path {path} at step {step}")]
    BlowUp { path: usize, step: usize },

    /// Picard iteration did not settle within the sweep budget.
    #[error("no convergence after {sweeps} sweeps; residual history {history:?}")]
    NonConvergence { sweeps: usize, history: Vec<f64> },

    /// The operation is not defined for the given inputs (e.g. kernel kind).
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Two fields that must share grids do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn eval(msg: impl Into<String>) -> Self {
        Error::Eval(msg.into())
    }

    pub fn unsupported(msg: impl Into<String>) -> Self {
        Error::Unsupported(msg.into())
    }

    pub fn grid_mismatch(msg: impl Into<String>) -> Self {
        Error::GridMismatch(msg.into())
    }
}
