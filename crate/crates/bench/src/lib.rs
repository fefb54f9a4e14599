//! Benchmark harness for the parallel-in-time BDF1 solver: declarative
//! experiment configs, space-time error norms and refinement rates,
//! speedup/efficiency measurement against the serial executor, and CSV/JSON/
//! text report emission (see [`report`] for the fixed CSV schema).

pub mod config;
pub mod experiment;
pub mod norms;
pub mod report;

pub use config::{
    parse_grids, BenchModel, ExperimentConfig, OutputFormat, SolverChoice, ToleranceRule,
    WorkerChoice,
};
pub use experiment::{
    run_experiment, ErrorReport, GridRow, HistoryTrace, SolverColumn, REFERENCE_RUN_TOLERANCE,
};
pub use norms::{convergence_rate, space_time_error, NormKind};
pub use report::{emit_report, history_csv, render_csv, render_json, render_table, CSV_HEADER};
