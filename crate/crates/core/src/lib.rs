//! Parallel-in-time BDF1 solver for 2-D nonlinear parabolic/convective
//! conservation laws.
//!
//! The implicit BDF1 discretization couples consecutive time levels through a
//! block-bidiagonal Newton system. This crate eliminates that coupling
//! exactly: left-multiplying each block row by the ordered product of the
//! earlier Jacobian blocks yields one independent banded system per time
//! level, so a worker pool can solve all levels of a global Newton iteration
//! concurrently while reproducing the sequential time-marching solution to
//! solver tolerance.
//!
//! Module map:
//! - [`model`]: benchmark PDEs (nonlinear heat, viscous Burgers front), flux
//!   and viscosity laws, exact solutions.
//! - [`grid`]: space-time grid, index maps, field containers.
//! - [`stencil`]: BDF1 + 5-point central discretization, residuals, and the
//!   pentadiagonal Newton blocks.
//! - [`band`]: diagonal-storage banded kernels (products with operation
//!   counting, matrix-vector, envelope LU, diagonal scaling).
//! - [`spline`]: natural cubic splines for the coarse-grid initial guess.
//! - [`sequential`]: the time-marching baseline solver.
//! - [`decouple`]: the decoupled all-at-once builder/solver, the global
//!   Newton loop, and the conditioning/speedup formulas.
//! - [`runtime`]: row-partitioned worker pool, per-level solve dispatch, and
//!   timing instrumentation.

pub mod band;
pub mod decouple;
pub mod error;
pub mod grid;
pub mod model;
pub mod runtime;
pub mod sequential;
pub mod spline;
pub mod stencil;

pub use band::{
    band_lu_solve, band_matmul, band_matvec, diagonal_of, BandedMatrix, DiagonalScaling, OpCounter,
    DEFAULT_PIVOT_FLOOR,
};
pub use decouple::{
    build_decoupled, coarse_initial_guess, condition_bound_max_nt, predicted_speedup, run_paradin,
    solve_decoupled, DecoupledLevel, DecoupledSystem, NewtonLevelProvider, ParadinConfig,
};
pub use error::{Error, Result};
pub use grid::{GlobalField, GridField, SpaceTimeGrid};
pub use model::{CustomModel, Domain, ModelKind, ModelSpec};
pub use runtime::{
    measure_run, parallel_build_decoupled, parallel_solve_levels, partition_rows,
    AssembledSystemProvider, Executor, LevelSystemProvider, RowPartition, TimingReport,
};
pub use sequential::{
    advance_step, run_sequential, IterationRecord, NewtonConfig, SolveStats,
};
pub use spline::{cubic_spline_interpolate_1d, NaturalCubicSpline};
pub use stencil::{
    assemble_jacobian, face_viscosity, jacobian_offsets, spatial_operator, step_residual,
};
