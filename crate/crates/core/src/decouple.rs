//! Direct decoupling of the all-at-once BDF1 Newton system.
//!
//! Each global Newton iteration yields the block-bidiagonal system
//! `A_n du^n - du^{n-1} = r^n`. Left-multiplying row `n` by the running
//! product of the earlier blocks turns it into `N_t` independent per-level
//! systems `P^n du^n = rtilde^n` with
//!
//! ```text
//! P^1 = A_1,            P^{n+1}      = P^n A_{n+1}
//! rtilde^1 = r^1,       rtilde^{n+1} = P^n r^{n+1} + rtilde^n
//! ```
//!
//! which a worker pool can solve concurrently, one time level per worker.
//! The recursion preserves the solution of the coupled system exactly, so
//! the global Newton iteration keeps its convergence rate.

use std::time::Instant;

use crate::band::{
    band_lu_solve, band_matmul, band_matvec, diagonal_of, BandedMatrix, DiagonalScaling,
};
use crate::error::{Error, Result};
use crate::grid::{GlobalField, SpaceTimeGrid};
use crate::model::ModelSpec;
use crate::runtime::{
    parallel_build_decoupled_timed, parallel_solve_levels_timed, partition_rows, Executor,
    LevelSystemProvider, PhaseTimes, TimingReport,
};
use crate::sequential::{rms, run_sequential, IterationRecord, NewtonConfig, SolveStats};
use crate::spline::cubic_spline_interpolate_1d;
use crate::stencil::{
    assemble_jacobian, jacobian_offsets, jacobian_row, residual_entry, step_residual,
};

/// One fully decoupled time level: the product matrix, accumulated right-hand
/// side, and the diagonal row scaling used as preconditioner.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoupledLevel {
    pub matrix: BandedMatrix,
    pub rhs: Vec<f64>,
    pub scaling: DiagonalScaling,
}

/// The per-level systems for all `N_t` time levels, index `k` holding time
/// level `k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoupledSystem {
    pub levels: Vec<DecoupledLevel>,
}

impl DecoupledSystem {
    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    /// True when every matrix entry, rhs entry, and scaling entry is bitwise
    /// identical between the two systems.
    pub fn bitwise_eq(&self, other: &DecoupledSystem) -> bool {
        if self.levels.len() != other.levels.len() {
            return false;
        }
        self.levels.iter().zip(&other.levels).all(|(a, b)| {
            a.matrix.offsets() == b.matrix.offsets()
                && a.matrix.n() == b.matrix.n()
                && a.matrix
                    .offsets()
                    .iter()
                    .all(|&o| bits_eq(a.matrix.diagonal(o).unwrap(), b.matrix.diagonal(o).unwrap()))
                && bits_eq(&a.rhs, &b.rhs)
                && bits_eq(a.scaling.values(), b.scaling.values())
        })
    }
}

fn bits_eq(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Configuration of the parallel-in-time solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParadinConfig {
    pub newton: NewtonConfig,
    /// Uniform space-time coarsening factor for the initial-guess run.
    pub coarsening_factor: usize,
    /// Row-scale each level by the main diagonal of its product matrix.
    pub preconditioning: bool,
    pub executor: Executor,
}

impl ParadinConfig {
    pub fn new(newton: NewtonConfig, coarsening_factor: usize) -> Self {
        ParadinConfig {
            newton,
            coarsening_factor,
            preconditioning: true,
            executor: Executor::Serial,
        }
    }

    pub fn validate(&self, grid: &SpaceTimeGrid) -> Result<()> {
        self.newton.validate()?;
        if let Executor::WorkerPool(w) = self.executor {
            if w == 0 {
                return Err(Error::InvalidConfig("worker pool needs at least 1 worker".into()));
            }
        }
        let cf = self.coarsening_factor;
        if cf < 2 {
            return Err(Error::InvalidConfig(format!(
                "coarsening factor must be at least 2, got {cf}"
            )));
        }
        if !(grid.nt().is_multiple_of(cf) && grid.nx().is_multiple_of(cf) && grid.ny().is_multiple_of(cf)) {
            return Err(Error::InvalidConfig(format!(
                "coarsening factor {cf} does not divide grid {} x {} x {}",
                grid.nt(),
                grid.nx(),
                grid.ny()
            )));
        }
        if grid.nx() / cf < 2 || grid.ny() / cf < 2 {
            return Err(Error::InvalidConfig(format!(
                "coarsening factor {cf} leaves fewer than 2 spatial intervals"
            )));
        }
        Ok(())
    }
}

/// Builds all `(P^n, rtilde^n)` pairs by the exact recursion, in product
/// order `A_1 A_2 ... A_n` (the blocks do not commute), attaching the
/// diagonal scaling of each product.
pub fn build_decoupled(
    jacobians: &[BandedMatrix],
    residuals: &[Vec<f64>],
) -> Result<DecoupledSystem> {
    build_decoupled_timed(jacobians, residuals, &mut PhaseTimes::default())
}

pub(crate) fn build_decoupled_timed(
    jacobians: &[BandedMatrix],
    residuals: &[Vec<f64>],
    phases: &mut PhaseTimes,
) -> Result<DecoupledSystem> {
    assert_eq!(jacobians.len(), residuals.len(), "level count mismatch");
    assert!(!jacobians.is_empty(), "need at least one level");

    let mut levels = Vec::with_capacity(jacobians.len());
    let mut product = jacobians[0].clone();
    let mut rhs = residuals[0].clone();
    levels.push(DecoupledLevel {
        scaling: diagonal_of(&product)?,
        matrix: product.clone(),
        rhs: rhs.clone(),
    });

    for l in 1..jacobians.len() {
        // rtilde^{l+1} = P^l r^{l+1} + rtilde^l, evaluated before the product
        // is advanced; fixed summation order keeps this bit-reproducible.
        let t0 = Instant::now();
        let pv = band_matvec(&product, &residuals[l]);
        rhs = pv.iter().zip(&rhs).map(|(a, b)| a + b).collect();
        phases.rhs_build += t0.elapsed().as_secs_f64();

        let t1 = Instant::now();
        product = band_matmul(&product, &jacobians[l], None);
        phases.product_build += t1.elapsed().as_secs_f64();

        levels.push(DecoupledLevel {
            scaling: diagonal_of(&product)?,
            matrix: product.clone(),
            rhs: rhs.clone(),
        });
    }
    Ok(DecoupledSystem { levels })
}

/// Solves every level of the decoupled system independently. Levels are
/// mutually independent, so any execution order yields identical updates.
pub fn solve_decoupled(sys: &DecoupledSystem, preconditioning: bool) -> Result<Vec<Vec<f64>>> {
    solve_decoupled_timed(sys, preconditioning, &mut PhaseTimes::default())
}

pub(crate) fn solve_decoupled_timed(
    sys: &DecoupledSystem,
    preconditioning: bool,
    phases: &mut PhaseTimes,
) -> Result<Vec<Vec<f64>>> {
    let t0 = Instant::now();
    let out = sys
        .levels
        .iter()
        .enumerate()
        .map(|(k, lvl)| solve_level(lvl, k + 1, preconditioning))
        .collect();
    phases.level_solve += t0.elapsed().as_secs_f64();
    out
}

/// Shared by the serial and worker-pool solve paths.
pub(crate) fn solve_level(
    level: &DecoupledLevel,
    index: usize,
    preconditioning: bool,
) -> Result<Vec<f64>> {
    let scaling = preconditioning.then_some(&level.scaling);
    band_lu_solve(&level.matrix, &level.rhs, scaling).map_err(|e| match e {
        Error::SingularPivot {
            row,
            magnitude,
            floor,
            ..
        } => Error::SingularPivot {
            row,
            magnitude,
            floor,
            level: Some(index),
        },
        other => other,
    })
}

/// Provider that assembles Jacobian rows and residual entries of the current
/// Newton iterate on demand; this is what build workers consume.
pub struct NewtonLevelProvider<'a> {
    grid: &'a SpaceTimeGrid,
    model: &'a ModelSpec,
    /// Initial condition (time level 0).
    initial: &'a [f64],
    /// Current iterate at levels `1..=nt`.
    iterate: &'a [Vec<f64>],
}

impl<'a> NewtonLevelProvider<'a> {
    pub fn new(
        grid: &'a SpaceTimeGrid,
        model: &'a ModelSpec,
        initial: &'a [f64],
        iterate: &'a [Vec<f64>],
    ) -> Self {
        debug_assert_eq!(iterate.len(), grid.nt());
        NewtonLevelProvider {
            grid,
            model,
            initial,
            iterate,
        }
    }

    fn level_state(&self, level: usize) -> (&[f64], &[f64]) {
        let u = self.iterate[level - 1].as_slice();
        let prev = if level == 1 {
            self.initial
        } else {
            self.iterate[level - 2].as_slice()
        };
        (u, prev)
    }
}

impl LevelSystemProvider for NewtonLevelProvider<'_> {
    fn dimension(&self) -> usize {
        self.grid.unknowns()
    }

    fn level_count(&self) -> usize {
        self.grid.nt()
    }

    fn jacobian_offsets(&self) -> Vec<isize> {
        jacobian_offsets(self.grid)
    }

    fn jacobian_row(&self, level: usize, row: usize, out: &mut Vec<(usize, f64)>) {
        let (u, _) = self.level_state(level);
        jacobian_row(self.grid, self.model, u, self.grid.t(level), row, out);
    }

    fn residual_entry(&self, level: usize, index: usize) -> f64 {
        let (u, prev) = self.level_state(level);
        residual_entry(self.grid, self.model, u, prev, self.grid.t(level), index)
    }
}

/// Sequential coarse-grid solve interpolated to the fine space-time grid with
/// natural cubic splines along x, then y, then t (the t = 0 level anchors the
/// time splines).
pub fn coarse_initial_guess(
    grid: &SpaceTimeGrid,
    model: &ModelSpec,
    coarsening_factor: usize,
    newton: &NewtonConfig,
) -> Result<GlobalField> {
    let coarse = grid.coarsened(model, coarsening_factor)?;
    let (coarse_field, _) = run_sequential(&coarse, model, newton)?;

    let fine_xs: Vec<f64> = (1..grid.nx()).map(|i| grid.x(i)).collect();
    let fine_ys: Vec<f64> = (1..grid.ny()).map(|j| grid.y(j)).collect();
    let coarse_xs: Vec<f64> = (0..=coarse.nx()).map(|i| coarse.x(i)).collect();
    let coarse_ys: Vec<f64> = (0..=coarse.ny()).map(|j| coarse.y(j)).collect();
    let ns = grid.unknowns();

    // Spatially interpolated fine fields at the coarse times, t = 0 first.
    let mut fields: Vec<Vec<f64>> = Vec::with_capacity(coarse.nt() + 1);
    fields.push(grid.initial_condition(model));
    for nc in 1..=coarse.nt() {
        let t = coarse.t(nc);
        let uc = coarse_field.level(nc);

        // Along x for every coarse grid line (boundary lines evaluate the
        // Dirichlet data directly at the fine abscissae).
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(coarse.ny() + 1);
        for jc in 0..=coarse.ny() {
            if jc >= 1 && jc < coarse.ny() {
                let mut vals = Vec::with_capacity(coarse.nx() + 1);
                vals.push(model.boundary_value(coarse.x(0), coarse.y(jc), t));
                for ic in 1..coarse.nx() {
                    vals.push(uc[coarse.index(ic, jc)]);
                }
                vals.push(model.boundary_value(coarse.x(coarse.nx()), coarse.y(jc), t));
                rows.push(cubic_spline_interpolate_1d(&coarse_xs, &vals, &fine_xs)?);
            } else {
                rows.push(
                    fine_xs
                        .iter()
                        .map(|&x| model.boundary_value(x, coarse.y(jc), t))
                        .collect(),
                );
            }
        }

        // Along y for every fine x column.
        let mut field = vec![0.0; ns];
        let mut column = Vec::with_capacity(coarse.ny() + 1);
        for (p, _) in fine_xs.iter().enumerate() {
            column.clear();
            column.extend(rows.iter().map(|r| r[p]));
            let vals = cubic_spline_interpolate_1d(&coarse_ys, &column, &fine_ys)?;
            for (q, v) in vals.into_iter().enumerate() {
                field[grid.index(p + 1, q + 1)] = v;
            }
        }
        fields.push(field);
    }

    // Along t for every fine spatial node; a single coarse step leaves two
    // knots, which degenerates to linear interpolation.
    let t_knots: Vec<f64> = (0..=coarse.nt()).map(|k| coarse.t(k)).collect();
    let fine_ts: Vec<f64> = (1..=grid.nt()).map(|n| grid.t(n)).collect();
    let mut levels = vec![vec![0.0; ns]; grid.nt()];
    if t_knots.len() >= 3 {
        let mut knot_vals = Vec::with_capacity(t_knots.len());
        for p in 0..ns {
            knot_vals.clear();
            knot_vals.extend(fields.iter().map(|f| f[p]));
            let vals = cubic_spline_interpolate_1d(&t_knots, &knot_vals, &fine_ts)?;
            for (n, v) in vals.into_iter().enumerate() {
                levels[n][p] = v;
            }
        }
    } else {
        let t1 = t_knots[1];
        for (n, &t) in fine_ts.iter().enumerate() {
            let theta = t / t1;
            for p in 0..ns {
                levels[n][p] = fields[0][p] + theta * (fields[1][p] - fields[0][p]);
            }
        }
    }
    Ok(GlobalField::new(levels))
}

/// Runs the global Newton loop on the decoupled all-at-once system: coarse
/// spline initial guess, then per-iteration build + independent level solves
/// under the configured executor.
pub fn run_paradin(
    grid: &SpaceTimeGrid,
    model: &ModelSpec,
    cfg: &ParadinConfig,
) -> Result<(GlobalField, SolveStats)> {
    let (field, stats, _) = run_paradin_engine(grid, model, cfg)?;
    Ok((field, stats))
}

pub(crate) fn run_paradin_engine(
    grid: &SpaceTimeGrid,
    model: &ModelSpec,
    cfg: &ParadinConfig,
) -> Result<(GlobalField, SolveStats, TimingReport)> {
    cfg.validate(grid)?;
    let start = Instant::now();
    let mut phases = PhaseTimes::default();
    let nt = grid.nt();
    let ns = grid.unknowns();

    let t0 = Instant::now();
    let guess = coarse_initial_guess(grid, model, cfg.coarsening_factor, &cfg.newton)?;
    phases.initial_guess += t0.elapsed().as_secs_f64();

    let initial = grid.initial_condition(model);
    let mut iterate = guess.into_levels();
    let mut history: Vec<IterationRecord> = Vec::new();
    let mut first_norm = f64::INFINITY;

    for k in 1..=cfg.newton.max_iterations {
        let deltas = match cfg.executor {
            Executor::Serial => {
                let t0 = Instant::now();
                let mut residuals = Vec::with_capacity(nt);
                for n in 1..=nt {
                    let prev = if n == 1 { &initial } else { &iterate[n - 2] };
                    residuals.push(step_residual(grid, model, &iterate[n - 1], prev, grid.t(n)));
                }
                phases.rhs_build += t0.elapsed().as_secs_f64();

                let t1 = Instant::now();
                let jacobians: Vec<BandedMatrix> = (1..=nt)
                    .map(|n| assemble_jacobian(grid, model, &iterate[n - 1], grid.t(n)))
                    .collect();
                phases.jacobian_assembly += t1.elapsed().as_secs_f64();

                let sys = build_decoupled_timed(&jacobians, &residuals, &mut phases)
                    .map_err(|e| conditioning_context(e, grid, model, &iterate))?;
                solve_decoupled_timed(&sys, cfg.preconditioning, &mut phases)
            }
            Executor::WorkerPool(w) => {
                let provider = NewtonLevelProvider::new(grid, model, &initial, &iterate);
                let partition = partition_rows(ns, w.min(ns))?;
                let sys = parallel_build_decoupled_timed(&provider, &partition, nt, &mut phases)
                    .map_err(|e| conditioning_context(e, grid, model, &iterate))?;
                parallel_solve_levels_timed(&sys, w, cfg.preconditioning, &mut phases)
            }
        }
        .map_err(|e| conditioning_context(e, grid, model, &iterate))?;

        for (level, delta) in iterate.iter_mut().zip(&deltas) {
            for (ui, di) in level.iter_mut().zip(delta) {
                *ui += di;
            }
        }

        let sum_sq: f64 = deltas.iter().flatten().map(|d| d * d).sum();
        let update_norm = (sum_sq / (nt * ns) as f64).sqrt();
        let residual_norm = global_residual_norm(grid, model, &initial, &iterate);
        history.push(IterationRecord {
            iteration: k,
            update_norm,
            residual_norm,
        });
        if k == 1 {
            first_norm = update_norm;
        }

        if !update_norm.is_finite() || update_norm > cfg.newton.divergence_factor * first_norm {
            return Err(Error::NewtonDiverged {
                level: None,
                iterations: k,
                norms: history.iter().map(|h| h.update_norm).collect(),
            });
        }
        if update_norm <= cfg.newton.tolerance {
            let iterations = k;
            let final_norms = deltas.iter().map(|d| rms(d)).collect();
            let stats = SolveStats {
                iterations_per_level: vec![iterations; nt],
                final_update_norms: final_norms,
                wall_time_s: start.elapsed().as_secs_f64(),
                history,
            };
            let report = phases.into_report(iterations, start.elapsed().as_secs_f64());
            return Ok((GlobalField::new(iterate), stats, report));
        }
    }

    Err(Error::NewtonDiverged {
        level: None,
        iterations: cfg.newton.max_iterations,
        norms: history.iter().map(|h| h.update_norm).collect(),
    })
}

/// RMS of the nonlinear per-level residuals over the whole space-time grid;
/// diagnostic only, never used for stopping.
fn global_residual_norm(
    grid: &SpaceTimeGrid,
    model: &ModelSpec,
    initial: &[f64],
    iterate: &[Vec<f64>],
) -> f64 {
    let nt = grid.nt();
    let ns = grid.unknowns();
    let mut sum_sq = 0.0;
    for n in 1..=nt {
        let prev = if n == 1 { initial } else { &iterate[n - 2] };
        let r = step_residual(grid, model, &iterate[n - 1], prev, grid.t(n));
        sum_sq += r.iter().map(|v| v * v).sum::<f64>();
    }
    (sum_sq / (nt * ns) as f64).sqrt()
}

/// Converts a per-level pivot breakdown into a conditioning report carrying
/// the estimated step-count bound for the run's viscosity and resolution.
fn conditioning_context(
    err: Error,
    grid: &SpaceTimeGrid,
    model: &ModelSpec,
    iterate: &[Vec<f64>],
) -> Error {
    match err {
        Error::SingularPivot {
            row,
            level: Some(level),
            ..
        } => {
            let mu = max_viscosity(model, iterate);
            Error::ConditioningBreakdown {
                level,
                row,
                bound: condition_bound_max_nt(grid.nx(), mu, 1.0, 1e-16),
            }
        }
        other => other,
    }
}

fn max_viscosity(model: &ModelSpec, iterate: &[Vec<f64>]) -> f64 {
    iterate
        .iter()
        .flatten()
        .map(|&u| model.viscosity(u))
        .fold(f64::MIN_POSITIVE, f64::max)
}

/// Largest number of uniform time steps for which the condition number of the
/// product of linear-heat Jacobians stays below the reciprocal accumulated
/// roundoff: the largest `N_t` with
/// `((1 + 8 mu /(N_t h^2)) / (1 + 2 pi^2 mu / N_t))^{N_t} < c h^4 / eps_rof`,
/// `h = 1/N_x`. Returns 0 when even one step violates the bound; the scan is
/// capped at 1,000,000.
pub fn condition_bound_max_nt(nx: usize, mu: f64, c: f64, eps_rof: f64) -> usize {
    assert!(nx > 0 && mu > 0.0 && c > 0.0 && eps_rof > 0.0, "inputs must be positive");
    const CAP: usize = 1_000_000;
    let h = 1.0 / nx as f64;
    let budget = (c * h.powi(4) / eps_rof).ln();
    let mut best = 0;
    for nt in 1..=CAP {
        let ntf = nt as f64;
        let lhs = ntf
            * ((1.0 + 8.0 * mu / (ntf * h * h)).ln()
                - (1.0 + 2.0 * std::f64::consts::PI.powi(2) * mu / ntf).ln());
        if lhs < budget {
            best = nt;
        } else {
            break;
        }
    }
    best
}

/// Cost-model speedup estimate `S = N_t / (N_t / c_f^p + 1)` for `N_t` time
/// levels, coarsening factor `c_f`, and solve-cost exponent `p` (at least 3
/// in two space dimensions).
pub fn predicted_speedup(nt: usize, cf: usize, p: u32) -> f64 {
    let cfp = (cf as f64).powi(p as i32);
    nt as f64 / (nt as f64 / cfp + 1.0)
}

#[cfg(test)]
mod tests {
    #![allow(clippy::needless_range_loop)]

    use super::*;
    use crate::band::OpCounter;
    use approx::assert_relative_eq;

    fn identity_levels(n: usize, nt: usize) -> (Vec<BandedMatrix>, Vec<Vec<f64>>) {
        let jac = vec![BandedMatrix::identity(n); nt];
        let res: Vec<Vec<f64>> = (0..nt)
            .map(|l| (0..n).map(|i| if i == l { 1.0 } else { 0.0 }).collect())
            .collect();
        (jac, res)
    }

    #[test]
    fn single_level_base_case() {
        let mut a = BandedMatrix::new(3, vec![0, 1]);
        a.set(0, 0, 2.0);
        a.set(1, 1, 3.0);
        a.set(2, 2, 4.0);
        a.set(0, 1, -1.0);
        let r = vec![1.0, 2.0, 3.0];
        let sys = build_decoupled(std::slice::from_ref(&a), std::slice::from_ref(&r)).unwrap();
        assert_eq!(sys.level_count(), 1);
        assert_eq!(sys.levels[0].matrix, a);
        assert_eq!(sys.levels[0].rhs, r);
    }

    #[test]
    fn two_level_recursion_matches_the_blockwise_elimination() {
        // P^2 = A_1 A_2 and rtilde^2 = A_1 r^2 + r^1, checked on dense 2x2
        // blocks.
        let mut a1 = BandedMatrix::new(2, vec![-1, 0, 1]);
        a1.set(0, 0, 2.0);
        a1.set(0, 1, 1.0);
        a1.set(1, 0, -0.5);
        a1.set(1, 1, 3.0);
        let mut a2 = BandedMatrix::new(2, vec![-1, 0, 1]);
        a2.set(0, 0, 1.5);
        a2.set(0, 1, -1.0);
        a2.set(1, 0, 0.25);
        a2.set(1, 1, 2.0);
        let r1 = vec![1.0, -2.0];
        let r2 = vec![0.5, 4.0];

        let sys = build_decoupled(&[a1.clone(), a2.clone()], &[r1.clone(), r2.clone()]).unwrap();

        let p2 = band_matmul(&a1, &a2, None);
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(sys.levels[1].matrix.get(i, j), p2.get(i, j));
            }
        }
        let a1r2 = band_matvec(&a1, &r2);
        for i in 0..2 {
            assert_eq!(sys.levels[1].rhs[i], a1r2[i] + r1[i]);
        }
    }

    #[test]
    fn identity_blocks_accumulate_prefix_sums() {
        let (jac, res) = identity_levels(4, 3);
        let sys = build_decoupled(&jac, &res).unwrap();
        for (l, level) in sys.levels.iter().enumerate() {
            assert_eq!(level.matrix, BandedMatrix::identity(4));
            let want: Vec<f64> = (0..4)
                .map(|i| if i <= l { 1.0 } else { 0.0 })
                .collect();
            assert_eq!(level.rhs, want);
        }
        // Identity systems solve to the prefix sums themselves.
        let updates = solve_decoupled(&sys, true).unwrap();
        for (l, u) in updates.iter().enumerate() {
            assert_eq!(u, &sys.levels[l].rhs);
        }
    }

    #[test]
    fn recursion_consistency_is_verifiable_entrywise() {
        let model = ModelSpec::heat_benchmark();
        let g = SpaceTimeGrid::new(&model, 6, 6, 4).unwrap();
        let mut jac = Vec::new();
        let mut res = Vec::new();
        for n in 1..=4 {
            let u = g.sampled_exact(&model, g.t(n));
            let prev = g.sampled_exact(&model, g.t(n - 1));
            jac.push(assemble_jacobian(&g, &model, &u, g.t(n)));
            res.push(step_residual(&g, &model, &u, &prev, g.t(n)));
        }
        let sys = build_decoupled(&jac, &res).unwrap();
        for l in 1..4 {
            let p = band_matmul(&sys.levels[l - 1].matrix, &jac[l], None);
            assert!(sys.levels[l].matrix == p, "product recursion broken at level {}", l + 1);
            let pv = band_matvec(&sys.levels[l - 1].matrix, &res[l]);
            for i in 0..g.unknowns() {
                assert_eq!(sys.levels[l].rhs[i], pv[i] + sys.levels[l - 1].rhs[i]);
            }
        }
    }

    #[test]
    fn product_order_matters_for_non_commuting_blocks() {
        let model = ModelSpec::burgers_benchmark();
        let g = SpaceTimeGrid::new(&model, 6, 6, 2).unwrap();
        let u1 = g.sampled_exact(&model, g.t(1));
        let u2 = g.sampled_exact(&model, g.t(2));
        let a1 = assemble_jacobian(&g, &model, &u1, g.t(1));
        let a2 = assemble_jacobian(&g, &model, &u2, g.t(2));
        let r1 = vec![1.0; g.unknowns()];
        let r2 = vec![0.5; g.unknowns()];

        let fwd = build_decoupled(&[a1.clone(), a2.clone()], &[r1.clone(), r2.clone()]).unwrap();
        let rev = build_decoupled(&[a2, a1], &[r1, r2]).unwrap();
        let x_fwd = solve_decoupled(&fwd, true).unwrap();
        let x_rev = solve_decoupled(&rev, true).unwrap();
        let diff = x_fwd[1]
            .iter()
            .zip(&x_rev[1])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(diff > 0.0, "permuted factor order must change the solution");
    }

    #[test]
    fn preconditioning_does_not_change_well_conditioned_solutions() {
        let model = ModelSpec::heat_benchmark();
        let g = SpaceTimeGrid::new(&model, 8, 8, 3).unwrap();
        let mut jac = Vec::new();
        let mut res = Vec::new();
        for n in 1..=3 {
            let u = g.sampled_exact(&model, g.t(n));
            let prev = g.sampled_exact(&model, g.t(n - 1));
            jac.push(assemble_jacobian(&g, &model, &u, g.t(n)));
            res.push(step_residual(&g, &model, &u, &prev, g.t(n)));
        }
        let sys = build_decoupled(&jac, &res).unwrap();
        let plain = solve_decoupled(&sys, false).unwrap();
        let scaled = solve_decoupled(&sys, true).unwrap();
        for (p, s) in plain.iter().zip(&scaled) {
            let scale = p.iter().fold(1e-30f64, |m, v| m.max(v.abs()));
            let diff = p
                .iter()
                .zip(s)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(diff <= 1e-12 * scale.max(1.0));
        }
    }

    #[test]
    fn operation_bound_holds_for_stencil_product_chains() {
        let model = ModelSpec::heat_benchmark();
        let g = SpaceTimeGrid::new(&model, 8, 8, 4).unwrap();
        let mut product = assemble_jacobian(&g, &model, &g.sampled_exact(&model, g.t(1)), g.t(1));
        for n in 2..=4 {
            let a = assemble_jacobian(&g, &model, &g.sampled_exact(&model, g.t(n)), g.t(n));
            let mut counter = OpCounter::default();
            let next = band_matmul(&product, &a, Some(&mut counter));
            let d = 5u64;
            assert!(counter.total() <= 2 * next.nnz() as u64 * d);
            product = next;
        }
    }

    #[test]
    fn guess_reproduces_constants_and_linear_fields_exactly() {
        let constant = ModelSpec::custom(
            crate::model::CustomModel {
                flux: std::sync::Arc::new(|_| 0.0),
                flux_derivative: std::sync::Arc::new(|_| 0.0),
                viscosity: std::sync::Arc::new(|_| 0.0),
                viscosity_derivative: std::sync::Arc::new(|_| 0.0),
                exact: std::sync::Arc::new(|_, _, _| 2.5),
            },
            crate::model::Domain::square(0.0, 1.0),
            1.0,
        )
        .unwrap();
        let g = SpaceTimeGrid::new(&constant, 8, 8, 4).unwrap();
        let guess = coarse_initial_guess(&g, &constant, 2, &NewtonConfig::new(1e-12)).unwrap();
        for n in 1..=4 {
            assert!(guess.level(n).iter().all(|&v| (v - 2.5).abs() < 1e-12));
        }

        let linear = ModelSpec::custom(
            crate::model::CustomModel {
                flux: std::sync::Arc::new(|_| 0.0),
                flux_derivative: std::sync::Arc::new(|_| 0.0),
                viscosity: std::sync::Arc::new(|_| 0.0),
                viscosity_derivative: std::sync::Arc::new(|_| 0.0),
                exact: std::sync::Arc::new(|x, y, _| 3.0 * x - 2.0 * y + 0.5),
            },
            crate::model::Domain::square(0.0, 1.0),
            1.0,
        )
        .unwrap();
        let g = SpaceTimeGrid::new(&linear, 8, 8, 4).unwrap();
        let guess = coarse_initial_guess(&g, &linear, 2, &NewtonConfig::new(1e-12)).unwrap();
        for n in 1..=4 {
            for (p, &v) in guess.level(n).iter().enumerate() {
                let (i, j) = g.node(p);
                let want = 3.0 * g.x(i) - 2.0 * g.y(j) + 0.5;
                assert!((v - want).abs() < 1e-11, "node ({i},{j}): {v} vs {want}");
            }
        }
    }

    #[test]
    fn condition_bound_reference_values() {
        assert_eq!(condition_bound_max_nt(64, 1e-3, 1.0, 1e-16), 22);
        assert!(condition_bound_max_nt(64, 1e-12, 1.0, 1e-16) >= 1000);
        assert!(
            condition_bound_max_nt(64, 1e-2, 1.0, 1e-16)
                <= condition_bound_max_nt(64, 1e-3, 1.0, 1e-16)
        );
    }

    #[test]
    fn speedup_model_reference_values() {
        assert_relative_eq!(predicted_speedup(32, 4, 3), 32.0 / 1.5, epsilon = 1e-9);
        assert!((predicted_speedup(1_000_000, 4, 3) - 64.0).abs() < 0.01 * 64.0);
        assert_relative_eq!(predicted_speedup(4, 4, 3), 4.0 / 1.0625, epsilon = 1e-12);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let model = ModelSpec::heat_benchmark();
        let g = SpaceTimeGrid::new(&model, 8, 8, 8).unwrap();
        let mut cfg = ParadinConfig::new(NewtonConfig::new(1e-8), 3);
        assert!(cfg.validate(&g).is_err(), "3 does not divide 8");
        cfg.coarsening_factor = 8;
        assert!(cfg.validate(&g).is_err(), "coarse grid would have 1 interval");
        cfg.coarsening_factor = 4;
        assert!(cfg.validate(&g).is_ok());
        cfg.executor = Executor::WorkerPool(0);
        assert!(cfg.validate(&g).is_err());
    }
}
