use thiserror::Error;

/// Errors raised by grids, problem definitions, solvers and analyzers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("diffusion stencil not monotone at node {node}: |a12| = {a12:.6e} exceeds admissible bound {bound:.6e}")]
    StencilNotMonotone { node: usize, a12: f64, bound: f64 },

    #[error("no finite L <= {cap:e} satisfies the superlinearity condition")]
    NoFiniteL { cap: f64 },

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e}, target {target:.3e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        target: f64,
    },

    #[error("vanishing-discount iterates are not Cauchy: increment grew from {previous:.3e} to {current:.3e}")]
    NonCauchy { previous: f64, current: f64 },

    #[error("linear solve failed: {0}")]
    LinearSolveFailure(String),

    #[error("eigenvector has a non-positive entry at node {node} ({value:.3e})")]
    NonPositiveEigenvector { node: usize, value: f64 },

    #[error("no A2 <= {cap:e} certifies the modulus")]
    NotCertifiable { cap: f64 },

    #[error("pair scan of {pairs} pairs exceeds the exhaustive limit {limit}")]
    TooManyPairs { pairs: u64, limit: u64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
