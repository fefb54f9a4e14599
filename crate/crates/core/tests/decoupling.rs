//! The decoupled per-level systems must reproduce the block-bidiagonal
//! forward-substitution solution exactly (up to solver rounding).

mod common;

use common::{block_forward_substitution, max_rel_diff, random_stencil_matrix, random_vector};
use paradin_core::{
    build_decoupled, run_paradin, run_sequential, solve_decoupled, Executor, ModelSpec,
    NewtonConfig, ParadinConfig, SpaceTimeGrid,
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

#[test]
fn decoupled_solves_match_dense_forward_substitution() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for case in 0..30 {
        let stride = rng.gen_range(2..8usize);
        let n = rng.gen_range(stride + 1..=50);
        let nt = rng.gen_range(1..=8usize);
        let jacobians: Vec<_> = (0..nt)
            .map(|_| random_stencil_matrix(&mut rng, n, stride))
            .collect();
        let residuals: Vec<_> = (0..nt).map(|_| random_vector(&mut rng, n)).collect();

        let sys = build_decoupled(&jacobians, &residuals).unwrap();
        let got = solve_decoupled(&sys, true).unwrap();
        let want = block_forward_substitution(&jacobians, &residuals);

        let tol = if nt <= 3 { 1e-12 } else { 1e-8 };
        for (l, (g, w)) in got.iter().zip(&want).enumerate() {
            let diff = max_rel_diff(g, w);
            assert!(
                diff <= tol,
                "case {case}: level {} off by {diff:e} (n={n}, nt={nt})",
                l + 1
            );
        }
    }
}

#[test]
fn paradin_and_sequential_solutions_agree_on_the_heat_benchmark() {
    let model = ModelSpec::heat_benchmark();
    let grid = SpaceTimeGrid::new(&model, 8, 8, 8).unwrap();
    let tol = 2.2e-5; // a tenth of the grid's discretization error
    let cfg = NewtonConfig::new(tol);
    let (seq, seq_stats) = run_sequential(&grid, &model, &cfg).unwrap();

    let pcfg = ParadinConfig::new(cfg, 4);
    let (par, par_stats) = run_paradin(&grid, &model, &pcfg).unwrap();

    assert!(seq.max_abs_diff(&par) <= 10.0 * tol);
    // Iteration parity between the marching and global Newton loops.
    let seq_iters = seq_stats.mean_iterations();
    let par_iters = par_stats.mean_iterations();
    assert!(
        (seq_iters - par_iters).abs() <= 1.0 + 1e-12,
        "iteration counts diverged: sequential {seq_iters}, parallel-in-time {par_iters}"
    );
}

#[test]
fn paradin_newton_contracts_quadratically_on_the_heat_benchmark() {
    let model = ModelSpec::heat_benchmark();
    let grid = SpaceTimeGrid::new(&model, 16, 16, 8).unwrap();
    let cfg = ParadinConfig::new(NewtonConfig::new(1e-9), 4);
    let (_, stats) = run_paradin(&grid, &model, &cfg).unwrap();
    let norms: Vec<f64> = stats.history.iter().map(|h| h.update_norm).collect();
    assert!(norms.len() >= 2, "expected at least two iterations: {norms:?}");
    let (prev, last) = (norms[norms.len() - 2], norms[norms.len() - 1]);
    assert!(
        last <= prev.powf(1.5),
        "superlinear contraction violated: {norms:?}"
    );
    // Norms decrease monotonically on this resolved problem.
    assert!(norms.windows(2).all(|w| w[1] < w[0]), "{norms:?}");
}

#[test]
fn executor_choice_does_not_change_the_solution_bitwise() {
    let model = ModelSpec::heat_benchmark();
    let grid = SpaceTimeGrid::new(&model, 16, 16, 4).unwrap();
    let newton = NewtonConfig::new(1e-7);

    let serial_cfg = ParadinConfig::new(newton, 4);
    let (serial_field, _) = run_paradin(&grid, &model, &serial_cfg).unwrap();

    for workers in [1usize, 2, 3, 4, 9] {
        let mut cfg = serial_cfg;
        cfg.executor = Executor::WorkerPool(workers);
        let (field, _) = run_paradin(&grid, &model, &cfg).unwrap();
        assert!(
            serial_field.bitwise_eq(&field),
            "worker count {workers} changed the solution"
        );
    }
}
