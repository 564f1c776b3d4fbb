use thiserror::Error;

/// Errors produced by the solver, decomposition, and sensitivity layers.
#[derive(Debug, Error)]
pub enum McfiError {
    /// A vector or matrix does not match the dimensions implied by its grid
    /// or design parametrization.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Invalid configuration (bad bounds, missing targets, unknown names).
    #[error("configuration error: {0}")]
    Config(String),

    /// The forward march produced a non-finite state.
    #[error("simulation diverged at step {step}: non-finite state detected")]
    Divergence { step: usize },

    /// Input too small for the requested decomposition.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Singular-vector sign cannot be fixed against the reference.
    #[error("ambiguous sign alignment: mode is orthogonal to the reference")]
    AmbiguousAlignment,

    /// An objective was evaluated at a point where its gradient does not exist.
    #[error("objective is not differentiable here (mode distance {distance:.3e}); f = {value:.6e}")]
    NonDifferentiable { value: f64, distance: f64 },

    /// The modal adjoint system is singular (zero or repeated singular value).
    #[error("singular modal adjoint system: sigma = {sigma:.3e}")]
    SingularSystem { sigma: f64 },

    /// A linear solve or factorization failed, or a post-solve residual check
    /// did not meet its tolerance.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Underlying LAPACK/linear-algebra backend error.
    #[error("linear algebra backend: {0}")]
    Linalg(#[from] ndarray_linalg::error::LinalgError),
}

pub type Result<T> = std::result::Result<T, McfiError>;
