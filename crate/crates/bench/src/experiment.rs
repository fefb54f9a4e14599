//! Experiment runner: refinement, scaling, and history studies over a grid
//! list, with the tolerance rule and speedup baselines resolved per grid.

use paradin_core::{
    run_paradin, run_sequential, Executor, IterationRecord, ModelSpec, NewtonConfig,
    ParadinConfig, SolveStats, SpaceTimeGrid,
};
use serde::Serialize;

use crate::config::{ExperimentConfig, SolverChoice, ToleranceRule};
use crate::norms::{convergence_rate, space_time_error, NormKind};

/// Tight RMS-update tolerance for the sequential reference run that measures
/// the true discretization error of a grid.
pub const REFERENCE_RUN_TOLERANCE: f64 = 1e-12;

pub const TIMING_NOTE: &str =
    "wall-clock seconds, speedup, and efficiency are measured on this host and are not comparable across machines";

#[derive(Debug, Clone, Serialize)]
pub struct SolverColumn {
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
    /// Refinement rate against the previous grid in the study, in the
    /// study's reporting norm.
    pub rate: Option<f64>,
    /// Mean Newton iterations per time level (global iterations for the
    /// parallel-in-time solver).
    pub iterations: f64,
    pub wall_s: f64,
}

#[derive(Debug, Clone)]
pub struct HistoryTrace {
    pub solver: &'static str,
    pub records: Vec<IterationRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridRow {
    pub nt: usize,
    pub nx: usize,
    pub ny: usize,
    /// Pool size used by the parallel-in-time run, absent for the serial
    /// executor.
    pub workers: Option<usize>,
    pub tolerance: Option<f64>,
    /// Discretization error of the tight reference run (only under the
    /// fraction-of-reference tolerance rule).
    pub reference_error: Option<f64>,
    pub sequential: Option<SolverColumn>,
    pub paradin: Option<SolverColumn>,
    /// Wall time of the serial-executor parallel-in-time baseline.
    pub serial_paradin_wall_s: Option<f64>,
    pub speedup: Option<f64>,
    pub efficiency: Option<f64>,
    /// Largest pointwise difference between the two solvers' solutions.
    pub max_solver_diff: Option<f64>,
    /// "ok" or the per-grid failure message; failures do not abort the study.
    pub status: String,
    #[serde(skip)]
    pub histories: Vec<HistoryTrace>,
}

impl GridRow {
    fn empty(nt: usize, nx: usize, ny: usize) -> Self {
        GridRow {
            nt,
            nx,
            ny,
            workers: None,
            tolerance: None,
            reference_error: None,
            sequential: None,
            paradin: None,
            serial_paradin_wall_s: None,
            speedup: None,
            efficiency: None,
            max_solver_diff: None,
            status: "ok".into(),
            histories: Vec::new(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub schema_version: u32,
    pub label: String,
    pub model: String,
    /// Reporting norm for the rate columns.
    pub norm: String,
    pub timing_note: String,
    pub rows: Vec<GridRow>,
}

/// Runs every grid of the study; per-grid failures land in the row status.
pub fn run_experiment(cfg: &ExperimentConfig) -> ErrorReport {
    let mut rows = Vec::with_capacity(cfg.grids.len());
    let model = cfg.model.spec();
    for &(nt, nx, ny) in &cfg.grids {
        rows.push(run_grid(cfg, &model, nt, nx, ny));
    }
    attach_rates(&mut rows, cfg.norm);
    ErrorReport {
        schema_version: 1,
        label: cfg.label.clone(),
        model: cfg.model.label().to_string(),
        norm: cfg.norm.label().to_string(),
        timing_note: TIMING_NOTE.to_string(),
        rows,
    }
}

fn run_grid(cfg: &ExperimentConfig, model: &ModelSpec, nt: usize, nx: usize, ny: usize) -> GridRow {
    let mut row = GridRow::empty(nt, nx, ny);
    match run_grid_inner(cfg, model, nt, nx, ny, &mut row) {
        Ok(()) => {}
        Err(msg) => row.status = msg,
    }
    row
}

fn run_grid_inner(
    cfg: &ExperimentConfig,
    model: &ModelSpec,
    nt: usize,
    nx: usize,
    ny: usize,
    row: &mut GridRow,
) -> Result<(), String> {
    let grid = SpaceTimeGrid::new(model, nx, ny, nt).map_err(|e| e.to_string())?;

    let tolerance = match cfg.tolerance {
        ToleranceRule::Absolute(t) => t,
        ToleranceRule::FractionOfReferenceError(frac) => {
            let (field, _) =
                run_sequential(&grid, model, &NewtonConfig::new(REFERENCE_RUN_TOLERANCE))
                    .map_err(|e| format!("reference run: {e}"))?;
            let err = space_time_error(&field, model, &grid, cfg.norm);
            row.reference_error = Some(err);
            frac * err
        }
    };
    row.tolerance = Some(tolerance);
    let newton = NewtonConfig::new(tolerance);

    let mut seq_field = None;
    if cfg.solver != SolverChoice::Paradin {
        let (field, stats) = best_of(cfg.repeats, || run_sequential(&grid, model, &newton))
            .map_err(|e| format!("sequential: {e}"))?;
        row.sequential = Some(column(&field, model, &grid, stats.mean_iterations(), stats.wall_time_s));
        row.histories.push(HistoryTrace {
            solver: "sequential",
            records: stats.history.clone(),
        });
        seq_field = Some(field);
    }

    if cfg.solver != SolverChoice::Sequential {
        let workers = cfg.workers.resolve(nt);
        row.workers = workers;
        let mut pcfg = ParadinConfig::new(newton, cfg.coarsening_factor);
        pcfg.preconditioning = cfg.preconditioning;
        pcfg.executor = match workers {
            Some(w) => Executor::WorkerPool(w),
            None => Executor::Serial,
        };
        let (field, stats) = best_of(cfg.repeats, || run_paradin(&grid, model, &pcfg))
            .map_err(|e| format!("paradin: {e}"))?;
        row.paradin = Some(column(&field, model, &grid, stats.mean_iterations(), stats.wall_time_s));
        row.histories.push(HistoryTrace {
            solver: "paradin",
            records: stats.history.clone(),
        });

        // Serial-executor baseline for the measured speedup columns.
        if let Some(w) = workers {
            let mut serial_cfg = pcfg;
            serial_cfg.executor = Executor::Serial;
            let (_, serial_stats) =
                best_of(cfg.repeats, || run_paradin(&grid, model, &serial_cfg))
                    .map_err(|e| format!("serial-executor baseline: {e}"))?;
            row.serial_paradin_wall_s = Some(serial_stats.wall_time_s);
            if stats.wall_time_s > 0.0 {
                let speedup = serial_stats.wall_time_s / stats.wall_time_s;
                row.speedup = Some(speedup);
                row.efficiency = Some(speedup / w as f64);
            }
        }

        if let Some(seq) = &seq_field {
            row.max_solver_diff = Some(seq.max_abs_diff(&field));
        }
    }
    Ok(())
}

fn column(
    field: &paradin_core::GlobalField,
    model: &ModelSpec,
    grid: &SpaceTimeGrid,
    iterations: f64,
    wall_s: f64,
) -> SolverColumn {
    SolverColumn {
        l1: space_time_error(field, model, grid, NormKind::L1),
        l2: space_time_error(field, model, grid, NormKind::L2),
        linf: space_time_error(field, model, grid, NormKind::Linf),
        rate: None,
        iterations,
        wall_s,
    }
}

/// Best-of-N timing: results are deterministic, so only the wall time is
/// taken from the fastest repetition.
fn best_of<F>(repeats: usize, mut run: F) -> paradin_core::Result<(paradin_core::GlobalField, SolveStats)>
where
    F: FnMut() -> paradin_core::Result<(paradin_core::GlobalField, SolveStats)>,
{
    let (field, mut stats) = run()?;
    for _ in 1..repeats {
        let (_, s) = run()?;
        if s.wall_time_s < stats.wall_time_s {
            stats.wall_time_s = s.wall_time_s;
        }
    }
    Ok((field, stats))
}

fn attach_rates(rows: &mut [GridRow], norm: NormKind) {
    let pick = |c: &SolverColumn| match norm {
        NormKind::L1 => c.l1,
        NormKind::L2 => c.l2,
        NormKind::Linf => c.linf,
    };
    for i in 1..rows.len() {
        let (prev_slice, cur_slice) = rows.split_at_mut(i);
        let prev = &prev_slice[i - 1];
        let cur = &mut cur_slice[0];
        if prev.nx >= cur.nx {
            continue;
        }
        if let (Some(p), Some(c)) = (&prev.sequential, &mut cur.sequential) {
            if pick(p) > 0.0 && pick(c) > 0.0 {
                c.rate = Some(convergence_rate(pick(p), pick(c), prev.nx, cur.nx));
            }
        }
        if let (Some(p), Some(c)) = (&prev.paradin, &mut cur.paradin) {
            if pick(p) > 0.0 && pick(c) > 0.0 {
                c.rate = Some(convergence_rate(pick(p), pick(c), prev.nx, cur.nx));
            }
        }
    }
}
