use thiserror::Error;

/// Error type shared by all modules of the crate.
#[derive(Debug, Error)]
pub enum HomogError {
    /// A caller-supplied parameter violates a precondition.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// The two phases coincide where the Π-transformation needs a contrast.
    #[error("degenerate contrast: {0}")]
    DegenerateContrast(String),

    /// A small-matrix inversion below the singularity threshold.
    #[error("singular matrix: |det| = {det:.3e} below threshold {threshold:.3e}")]
    SingularMatrix { det: f64, threshold: f64 },

    /// Iterative linear solver ran out of budget.
    #[error(
        "solver did not converge after {iterations} iterations (relative residual {residual:.3e})"
    )]
    NonConvergence { iterations: usize, residual: f64 },

    /// Eigenvalue iteration ran out of budget.
    #[error(
        "eigen-iteration did not converge after {iterations} iterations (change {change:.3e})"
    )]
    EigenNonConvergence { iterations: usize, change: f64 },

    /// Grid too coarse for the requested geometry feature.
    #[error("under-resolved: {0}")]
    UnderResolved(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed input file.
    #[error("format error: {0}")]
    Format(String),
}
