//! Serial/worker-pool determinism: the row-partitioned build and the
//! dispatched level solves must be bit-identical to their serial
//! counterparts for every worker count.

mod common;

use common::{random_stencil_matrix, random_vector};
use paradin_core::{
    build_decoupled, measure_run, parallel_build_decoupled, parallel_solve_levels,
    partition_rows, solve_decoupled, AssembledSystemProvider, BandedMatrix, Executor, ModelSpec,
    NewtonConfig, ParadinConfig, SpaceTimeGrid,
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn bits_eq(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

#[test]
fn parallel_build_is_bitwise_equal_to_serial_for_all_worker_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 36;
    let nt = 5;
    let jacobians: Vec<_> = (0..nt)
        .map(|_| random_stencil_matrix(&mut rng, n, 6))
        .collect();
    let residuals: Vec<_> = (0..nt).map(|_| random_vector(&mut rng, n)).collect();

    let serial = build_decoupled(&jacobians, &residuals).unwrap();
    let provider = AssembledSystemProvider::new(&jacobians, &residuals).unwrap();

    for workers in [1usize, 2, 4, 5, 7] {
        let partition = partition_rows(n, workers).unwrap();
        let parallel = parallel_build_decoupled(&provider, &partition, nt).unwrap();
        assert!(
            serial.bitwise_eq(&parallel),
            "{workers}-worker build differs from serial"
        );
    }
}

#[test]
fn identity_blocks_build_prefix_sums_under_any_worker_count() {
    let n = 12;
    let nt = 4;
    let jacobians = vec![BandedMatrix::identity(n); nt];
    let residuals: Vec<Vec<f64>> = (0..nt)
        .map(|l| (0..n).map(|i| (i + l) as f64).collect())
        .collect();
    let provider = AssembledSystemProvider::new(&jacobians, &residuals).unwrap();

    for workers in [1usize, 3, 4] {
        let partition = partition_rows(n, workers).unwrap();
        let sys = parallel_build_decoupled(&provider, &partition, nt).unwrap();
        for (l, level) in sys.levels.iter().enumerate() {
            assert_eq!(level.matrix, BandedMatrix::identity(n));
            let want: Vec<f64> = (0..n)
                .map(|i| (0..=l).map(|j| (i + j) as f64).sum())
                .collect();
            assert_eq!(level.rhs, want);
        }
    }
}

#[test]
fn dispatched_level_solves_equal_the_serial_solve_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 30;
    let nt = 6;
    let jacobians: Vec<_> = (0..nt)
        .map(|_| random_stencil_matrix(&mut rng, n, 5))
        .collect();
    let residuals: Vec<_> = (0..nt).map(|_| random_vector(&mut rng, n)).collect();
    let sys = build_decoupled(&jacobians, &residuals).unwrap();

    let serial = solve_decoupled(&sys, true).unwrap();
    // Includes oversubscription: more workers than levels leaves idle workers.
    for workers in [1usize, 2, 4, 6, 16] {
        let parallel = parallel_solve_levels(&sys, workers, true).unwrap();
        assert_eq!(parallel.len(), serial.len());
        for (s, p) in serial.iter().zip(&parallel) {
            assert!(bits_eq(s, p), "{workers}-worker solve differs");
        }
    }
}

#[test]
fn newton_provider_pool_build_matches_serial_on_the_heat_instance() {
    // Full solver-path determinism on the heat instance: decoupled systems
    // and final fields bitwise identical between executors.
    let model = ModelSpec::heat_benchmark();
    let grid = SpaceTimeGrid::new(&model, 16, 16, 4).unwrap();
    let newton = NewtonConfig::new(5e-7);
    let serial_cfg = ParadinConfig::new(newton, 4);
    let (serial_field, serial_stats) = paradin_core::run_paradin(&grid, &model, &serial_cfg).unwrap();

    for workers in [2usize, 4] {
        let mut cfg = serial_cfg;
        cfg.executor = Executor::WorkerPool(workers);
        let (field, stats) = paradin_core::run_paradin(&grid, &model, &cfg).unwrap();
        assert!(serial_field.bitwise_eq(&field));
        assert_eq!(
            serial_stats.iterations_per_level, stats.iterations_per_level,
            "executor changed the iteration count"
        );
        for (a, b) in serial_stats.history.iter().zip(&stats.history) {
            assert_eq!(a.update_norm.to_bits(), b.update_norm.to_bits());
        }
    }
}

#[test]
fn timing_report_accounts_for_the_run() {
    let model = ModelSpec::heat_benchmark();
    let grid = SpaceTimeGrid::new(&model, 16, 16, 4).unwrap();
    let cfg = ParadinConfig::new(NewtonConfig::new(5e-7), 4);

    // Serial executor: no messaging, so communication stays below 1% of the
    // total, and the phases account for the wall clock within slack.
    let report = measure_run(&grid, &model, &cfg).unwrap();
    assert!(report.iterations >= 1);
    assert!(report.communication_s <= 0.01 * report.total_s.max(1e-9));
    assert!(report.phase_sum() <= report.total_s * 1.05 + 1e-3);
    assert!(report.initial_guess_s > 0.0);
    assert!(report.level_solve_s > 0.0);

    let mut pool_cfg = cfg;
    pool_cfg.executor = Executor::WorkerPool(2);
    let pool_report = measure_run(&grid, &model, &pool_cfg).unwrap();
    assert_eq!(pool_report.iterations, report.iterations);
    assert!(pool_report.phase_sum() <= pool_report.total_s * 1.05 + 1e-3);
}

#[test]
fn pool_speedup_on_multicore_hosts() {
    // Measured speedup of the pooled executor over the serial one; only
    // meaningful with real hardware parallelism.
    let cores = std::thread::available_parallelism().map_or(1, |c| c.get());
    if cores < 2 {
        eprintln!("SKIP: pool_speedup_on_multicore_hosts needs >= 2 cores, have {cores}");
        return;
    }
    let model = ModelSpec::heat_benchmark();
    let grid = SpaceTimeGrid::new(&model, 32, 32, 8).unwrap();
    let cfg = ParadinConfig::new(NewtonConfig::new(1e-6), 4);
    let serial = measure_run(&grid, &model, &cfg).unwrap();
    let mut pool_cfg = cfg;
    pool_cfg.executor = Executor::WorkerPool(8.min(cores));
    let pool = measure_run(&grid, &model, &pool_cfg).unwrap();
    assert!(
        pool.total_s < serial.total_s,
        "pooled run ({:.3}s) not faster than serial ({:.3}s)",
        pool.total_s,
        serial.total_s
    );
}
