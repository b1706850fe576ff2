use thiserror::Error;

/// Errors produced by the coefficient routines and the solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature did not converge on [{a}, {b}]: estimate {estimate:e}, change {change:e}")]
    QuadratureNonConvergence {
        a: f64,
        b: f64,
        estimate: f64,
        change: f64,
    },

    #[error("infeasible capacity: M/epsilon = {ratio} is below L + 1 = {minimum}")]
    InfeasibleCapacity { ratio: f64, minimum: f64 },

    #[error("root bracket failure: {0}")]
    Bracket(String),

    #[error("ill-conditioned rational fit (condition estimate {condition:e}): {reason}")]
    IllConditionedFit { condition: f64, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("mesh Peclet number {peclet:.4} violates the stability limit 2")]
    Peclet { peclet: f64 },

    #[error("stencil degraded at ghost {ghost}: {reason}; bilinear fallback available")]
    StencilDegraded { ghost: usize, reason: String },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("iterative solve did not converge after {iterations} iterations (relative residual {residual:e})")]
    IterativeNonConvergence { iterations: usize, residual: f64 },

    #[error("Picard iteration did not converge in {iterations} iterations (max change {change:e}); reduce dt")]
    Picard { iterations: usize, change: f64 },

    #[error("saturation overflow: trapped density {trapped:e} exceeds capacity {capacity:e}")]
    SaturationOverflow { trapped: f64, capacity: f64 },

    #[error("concentration left [0, 1] under saturating mobility: {0:e}")]
    Bounds(f64),

    #[error("output time mismatch: {0}")]
    Alignment(String),
}

pub type Result<T> = std::result::Result<T, Error>;
