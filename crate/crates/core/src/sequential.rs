//! Sequential BDF1 time marching: the baseline solver, correctness oracle,
//! and coarse-grid engine for the parallel-in-time initial guess.

use std::time::Instant;

use crate::band::band_lu_solve;
use crate::error::{Error, Result};
use crate::grid::{GlobalField, GridField, SpaceTimeGrid};
use crate::model::ModelSpec;
use crate::stencil::{assemble_jacobian, step_residual};

/// Newton iteration controls shared by the sequential and parallel-in-time
/// solvers. The stopping metric is the RMS update norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub divergence_factor: f64,
}

impl NewtonConfig {
    pub fn new(tolerance: f64) -> Self {
        NewtonConfig {
            tolerance,
            max_iterations: 20,
            divergence_factor: 1e6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let tol_ok = self.tolerance > 0.0;
        if !tol_ok {
            return Err(Error::InvalidConfig(format!(
                "Newton tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

/// One aggregated Newton iteration: the all-level RMS update norm (the
/// stopping metric) plus an RMS residual norm for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub update_norm: f64,
    pub residual_norm: f64,
}

/// Per-run solver statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveStats {
    /// Newton iterations spent on each time level (for the global solver,
    /// every level shares the global iteration count).
    pub iterations_per_level: Vec<usize>,
    /// Last update norm observed on each level.
    pub final_update_norms: Vec<f64>,
    pub wall_time_s: f64,
    /// Aggregated per-iteration convergence records.
    pub history: Vec<IterationRecord>,
}

impl SolveStats {
    pub fn mean_iterations(&self) -> f64 {
        if self.iterations_per_level.is_empty() {
            return 0.0;
        }
        self.iterations_per_level.iter().sum::<usize>() as f64
            / self.iterations_per_level.len() as f64
    }
}

/// RMS norm `sqrt(sum v_i^2 / len)`.
pub(crate) fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

pub(crate) struct LevelTrace {
    pub update_norms: Vec<f64>,
    pub residual_norms: Vec<f64>,
}

/// Advances one BDF1 step with plain Newton starting from the previous-level
/// solution. Returns the converged level and the number of iterations taken.
pub fn advance_step(
    grid: &SpaceTimeGrid,
    model: &ModelSpec,
    u_prev: &[f64],
    t_n: f64,
    cfg: &NewtonConfig,
) -> Result<(GridField, usize)> {
    let (u, trace) = advance_step_traced(grid, model, u_prev, t_n, cfg, None)?;
    Ok((u, trace.update_norms.len()))
}

pub(crate) fn advance_step_traced(
    grid: &SpaceTimeGrid,
    model: &ModelSpec,
    u_prev: &[f64],
    t_n: f64,
    cfg: &NewtonConfig,
    level: Option<usize>,
) -> Result<(GridField, LevelTrace)> {
    cfg.validate()?;
    assert_eq!(u_prev.len(), grid.unknowns(), "field length mismatch");

    let mut u = u_prev.to_vec();
    let mut trace = LevelTrace {
        update_norms: Vec::new(),
        residual_norms: Vec::new(),
    };
    let mut first_norm = f64::INFINITY;

    for _ in 1..=cfg.max_iterations {
        let r = step_residual(grid, model, &u, u_prev, t_n);
        let a = assemble_jacobian(grid, model, &u, t_n);
        let delta = band_lu_solve(&a, &r, None).map_err(|e| match e {
            Error::SingularPivot {
                row,
                magnitude,
                floor,
                ..
            } => Error::SingularPivot {
                row,
                magnitude,
                floor,
                level,
            },
            other => other,
        })?;
        for (ui, di) in u.iter_mut().zip(&delta) {
            *ui += di;
        }
        let norm = rms(&delta);
        trace.residual_norms.push(rms(&r));
        trace.update_norms.push(norm);
        if trace.update_norms.len() == 1 {
            first_norm = norm;
        }

        if !norm.is_finite() || norm > cfg.divergence_factor * first_norm {
            return Err(Error::NewtonDiverged {
                level,
                iterations: trace.update_norms.len(),
                norms: trace.update_norms,
            });
        }
        if norm <= cfg.tolerance {
            return Ok((u, trace));
        }
    }
    Err(Error::NewtonDiverged {
        level,
        iterations: trace.update_norms.len(),
        norms: trace.update_norms,
    })
}

/// Marches the full time horizon level by level, starting from the exact
/// initial condition. The returned field holds levels `1..=nt`.
pub fn run_sequential(
    grid: &SpaceTimeGrid,
    model: &ModelSpec,
    cfg: &NewtonConfig,
) -> Result<(GlobalField, SolveStats)> {
    cfg.validate()?;
    let start = Instant::now();

    let mut levels = Vec::with_capacity(grid.nt());
    let mut iterations = Vec::with_capacity(grid.nt());
    let mut final_norms = Vec::with_capacity(grid.nt());
    let mut traces = Vec::with_capacity(grid.nt());

    let mut u_prev = grid.initial_condition(model);
    for n in 1..=grid.nt() {
        let (u, trace) = advance_step_traced(grid, model, &u_prev, grid.t(n), cfg, Some(n))?;
        iterations.push(trace.update_norms.len());
        final_norms.push(*trace.update_norms.last().unwrap());
        traces.push(trace);
        u_prev = u.clone();
        levels.push(u);
    }

    // Aggregate per-level traces into the all-level RMS norm per iteration
    // index; levels that converged earlier contribute zero.
    let max_iters = iterations.iter().copied().max().unwrap_or(0);
    let nt = grid.nt() as f64;
    let history = (0..max_iters)
        .map(|k| {
            let upd = traces
                .iter()
                .map(|t| t.update_norms.get(k).map_or(0.0, |v| v * v))
                .sum::<f64>();
            let res = traces
                .iter()
                .map(|t| t.residual_norms.get(k).map_or(0.0, |v| v * v))
                .sum::<f64>();
            IterationRecord {
                iteration: k + 1,
                update_norm: (upd / nt).sqrt(),
                residual_norm: (res / nt).sqrt(),
            }
        })
        .collect();

    Ok((
        GlobalField::new(levels),
        SolveStats {
            iterations_per_level: iterations,
            final_update_norms: final_norms,
            wall_time_s: start.elapsed().as_secs_f64(),
            history,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CustomModel, Domain};
    use std::sync::Arc;

    fn zero_operator_model() -> ModelSpec {
        ModelSpec::custom(
            CustomModel {
                flux: Arc::new(|_| 0.0),
                flux_derivative: Arc::new(|_| 0.0),
                viscosity: Arc::new(|_| 0.0),
                viscosity_derivative: Arc::new(|_| 0.0),
                exact: Arc::new(|x, y, _| x - y),
            },
            Domain::square(0.0, 1.0),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn zero_operator_converges_in_one_iteration_to_previous_level() {
        let model = zero_operator_model();
        let g = SpaceTimeGrid::new(&model, 6, 6, 3).unwrap();
        let u_prev = g.initial_condition(&model);
        let (u, iters) = advance_step(&g, &model, &u_prev, g.t(1), &NewtonConfig::new(1e-12))
            .unwrap();
        assert_eq!(iters, 1);
        assert_eq!(u, u_prev);
    }

    #[test]
    fn zero_operator_march_keeps_the_initial_condition() {
        let model = zero_operator_model();
        let g = SpaceTimeGrid::new(&model, 6, 6, 4).unwrap();
        let (field, stats) = run_sequential(&g, &model, &NewtonConfig::new(1e-12)).unwrap();
        let ic = g.initial_condition(&model);
        for n in 1..=4 {
            assert_eq!(field.level(n), ic.as_slice());
        }
        assert_eq!(stats.iterations_per_level, vec![1; 4]);
    }

    #[test]
    fn linear_problem_hits_machine_zero_update_on_second_iteration() {
        // Constant viscosity and zero flux make each step a linear solve: the
        // first Newton update is the full correction, the second is rounding.
        let model = ModelSpec::custom(
            CustomModel {
                flux: Arc::new(|_| 0.0),
                flux_derivative: Arc::new(|_| 0.0),
                viscosity: Arc::new(|_| 0.05),
                viscosity_derivative: Arc::new(|_| 0.0),
                exact: Arc::new(|x, y, _| x * x + y),
            },
            Domain::square(0.0, 1.0),
            1.0,
        )
        .unwrap();
        let g = SpaceTimeGrid::new(&model, 8, 8, 2).unwrap();
        let u_prev = g.initial_condition(&model);
        let (_, trace) =
            advance_step_traced(&g, &model, &u_prev, g.t(1), &NewtonConfig::new(1e-13), None)
                .unwrap();
        assert_eq!(trace.update_norms.len(), 2);
        assert!(trace.update_norms[1] <= 1e-13);
        assert!(trace.update_norms[0] > 1e-6);
    }

    #[test]
    fn two_identical_runs_are_bitwise_identical() {
        let model = ModelSpec::heat_benchmark();
        let g = SpaceTimeGrid::new(&model, 8, 8, 4).unwrap();
        let cfg = NewtonConfig::new(1e-8);
        let (a, _) = run_sequential(&g, &model, &cfg).unwrap();
        let (b, _) = run_sequential(&g, &model, &cfg).unwrap();
        assert!(a.bitwise_eq(&b));
    }

    #[test]
    fn newton_divergence_is_reported_with_level() {
        // An unsolvable tolerance forces max-iteration exhaustion.
        let model = ModelSpec::heat_benchmark();
        let g = SpaceTimeGrid::new(&model, 6, 6, 2).unwrap();
        let cfg = NewtonConfig {
            tolerance: 1e-300,
            max_iterations: 2,
            divergence_factor: 1e6,
        };
        match run_sequential(&g, &model, &cfg) {
            Err(Error::NewtonDiverged { level, norms, .. }) => {
                assert_eq!(level, Some(1));
                assert_eq!(norms.len(), 2);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn heat_steps_converge_quadratically() {
        let model = ModelSpec::heat_benchmark();
        let g = SpaceTimeGrid::new(&model, 16, 16, 16).unwrap();
        let u_prev = g.initial_condition(&model);
        let (_, trace) =
            advance_step_traced(&g, &model, &u_prev, g.t(1), &NewtonConfig::new(1e-10), None)
                .unwrap();
        // Quadratic contraction over the final two full-precision iterations.
        let n = trace.update_norms.len();
        assert!(n >= 2, "need at least two iterations, got {n}");
        let (prev, last) = (trace.update_norms[n - 2], trace.update_norms[n - 1]);
        assert!(
            last <= prev.powf(1.5),
            "superlinear contraction violated: {prev} -> {last}"
        );
    }
}
