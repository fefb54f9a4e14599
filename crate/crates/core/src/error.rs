//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("exact solution undefined at (x={x}, y={y}, t={t}): radicand {radicand:e} is not positive")]
    ExactSolutionDomain { x: f64, y: f64, t: f64, radicand: f64 },

    /// No-pivot LU hit a pivot below the floor; on a decoupled level this
    /// signals a singular or catastrophically conditioned product matrix.
    #[error("singular pivot at row {row}{}: |{magnitude:e}| < {floor:e}", level_tag(.level))]
    SingularPivot {
        row: usize,
        magnitude: f64,
        floor: f64,
        level: Option<usize>,
    },

    #[error("zero diagonal entry at row {row}: |{magnitude:e}| < {floor:e}")]
    ZeroDiagonal { row: usize, magnitude: f64, floor: f64 },

    #[error("Newton did not converge{} after {iterations} iteration(s); update norms {norms:?}", level_tag(.level))]
    NewtonDiverged {
        level: Option<usize>,
        iterations: usize,
        norms: Vec<f64>,
    },

    /// A per-level solve broke down because the product matrix is too
    /// ill-conditioned; `bound` is the estimated largest time-step count that
    /// stays within the accumulated-roundoff budget for this run's viscosity
    /// and spatial resolution.
    #[error("conditioning breakdown at time level {level} (pivot row {row}); \
             estimated max parallel-in-time step count for this setup: {bound}")]
    ConditioningBreakdown { level: usize, row: usize, bound: usize },

    #[error("spline knots not strictly increasing at index {index}")]
    NonMonotoneKnots { index: usize },

    #[error("spline query {value} outside knot range [{lo}, {hi}]")]
    QueryOutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("{workers} workers exceed the {rows} partitionable rows")]
    TooManyWorkers { workers: usize, rows: usize },

    #[error("worker {worker} failed: {message}")]
    WorkerFailure { worker: usize, message: String },
}

fn level_tag(level: &Option<usize>) -> String {
    match level {
        Some(n) => format!(" (time level {n})"),
        None => String::new(),
    }
}
