//! Command-line benchmark harness.
//!
//! Subcommands: `refine` (error/rate study), `scale` (weak-scaling speedup),
//! `history` (per-iteration Newton convergence on one grid), `condition`
//! (stable step-count bound sweep), `predict-speedup` (cost-model estimate).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use paradin_bench::{
    emit_report, history_csv, render_csv, render_json, render_table, run_experiment, BenchModel,
    ExperimentConfig, OutputFormat,
};
use paradin_core::{condition_bound_max_nt, predicted_speedup};

#[derive(Parser)]
#[command(
    name = "paradin-bench",
    version,
    about = "Benchmark harness for the parallel-in-time BDF1 solver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grid-refinement error and convergence-rate study
    Refine(RunArgs),
    /// Weak-scaling speedup study against the serial executor
    Scale(RunArgs),
    /// Newton convergence history on a single grid
    History(RunArgs),
    /// Largest stable time-step count as viscosity and resolution vary
    Condition(ConditionArgs),
    /// Cost-model speedup estimate
    PredictSpeedup(PredictArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Flat `key = value` experiment config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// heat | burgers (required without --config)
    #[arg(long)]
    model: Option<String>,
    /// Grid list: `8,16,24` (cubes) or `4x64x64 8x64x64`
    #[arg(long)]
    grids: Option<String>,
    /// Time steps for a single-grid run (with --nx)
    #[arg(long)]
    nt: Option<usize>,
    /// Spatial intervals per direction for a single-grid run
    #[arg(long)]
    nx: Option<usize>,
    /// Spatial intervals in y (defaults to --nx)
    #[arg(long)]
    ny: Option<usize>,
    /// serial | auto (one worker per time level) | count; default from
    /// PARADIN_WORKERS, else serial
    #[arg(long)]
    workers: Option<String>,
    /// Space-time coarsening factor of the initial-guess run
    #[arg(long)]
    cf: Option<usize>,
    /// sequential | paradin | both
    #[arg(long)]
    solver: Option<String>,
    /// frac:<f> (fraction of the measured discretization error) or abs:<tol>
    #[arg(long)]
    tolerance: Option<String>,
    /// l1 | l2 | linf (reporting norm; defaults per model)
    #[arg(long)]
    norm: Option<String>,
    /// Stdout rendering: csv | json | table (files always get all three)
    #[arg(long)]
    format: Option<String>,
    /// Report output directory (default bench-out)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Best-of-N timing repetitions
    #[arg(long)]
    repeats: Option<usize>,
    /// Disable diagonal row scaling of the decoupled systems
    #[arg(long)]
    no_precondition: bool,
}

impl RunArgs {
    fn resolve(&self, default_label: &str) -> Result<ExperimentConfig, String> {
        let mut cfg = match (&self.config, &self.model) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(model)) => {
                let mut cfg = ExperimentConfig::new(model.parse::<BenchModel>()?);
                cfg.label = format!("{default_label}_{}", cfg.model.label());
                cfg
            }
            (None, None) => return Err("pass --config or --model".into()),
        };
        if let Some(model) = &self.model {
            let model: BenchModel = model.parse()?;
            if model != cfg.model {
                // Switching the model resets the model-derived defaults.
                let mut fresh = ExperimentConfig::new(model);
                fresh.label = cfg.label.clone();
                fresh.grids = cfg.grids.clone();
                cfg = fresh;
            }
        }
        if let Some(grids) = &self.grids {
            cfg.apply("grids", grids)?;
        }
        if let Some(nx) = self.nx {
            let nt = self.nt.unwrap_or(nx);
            let ny = self.ny.unwrap_or(nx);
            cfg.grids = vec![(nt, nx, ny)];
        } else if self.nt.is_some() || self.ny.is_some() {
            return Err("--nt/--ny need --nx".into());
        }
        let workers = self
            .workers
            .clone()
            .or_else(|| std::env::var("PARADIN_WORKERS").ok());
        if let Some(w) = workers {
            cfg.apply("workers", &w)?;
        }
        if let Some(cf) = self.cf {
            cfg.apply("cf", &cf.to_string())?;
        }
        if let Some(s) = &self.solver {
            cfg.apply("solver", s)?;
        }
        if let Some(t) = &self.tolerance {
            cfg.apply("tolerance", t)?;
        }
        if let Some(n) = &self.norm {
            cfg.apply("norm", n)?;
        }
        if let Some(f) = &self.format {
            cfg.apply("format", f)?;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = Some(out.clone());
        }
        if let Some(r) = self.repeats {
            cfg.apply("repeats", &r.to_string())?;
        }
        if self.no_precondition {
            cfg.preconditioning = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct ConditionArgs {
    /// Flat config with keys nx, mu (comma list), c, eps_rof
    #[arg(long)]
    config: Option<PathBuf>,
    /// Spatial intervals per direction
    #[arg(long, default_value_t = 64)]
    nx: usize,
    /// Viscosity sweep values
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    mu: Vec<f64>,
    /// Bound constant
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Per-operation roundoff
    #[arg(long, default_value_t = 1e-16)]
    eps_rof: f64,
    /// Optional CSV output path
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// Time-step counts to evaluate
    #[arg(long, value_delimiter = ',', num_args = 1.., default_values_t = [4usize, 8, 16, 24, 32])]
    nt: Vec<usize>,
    /// Space-time coarsening factor
    #[arg(long, default_value_t = 4)]
    cf: usize,
    /// Solve-cost exponent (>= 3 in two space dimensions)
    #[arg(long, default_value_t = 3)]
    p: u32,
}

fn run_study(args: &RunArgs, label: &str) -> Result<bool, String> {
    let cfg = args.resolve(label)?;
    let report = run_experiment(&cfg);

    let out_dir = cfg
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("bench-out"));
    let written =
        emit_report(&report, &out_dir).map_err(|e| format!("writing reports: {e}"))?;

    match cfg.format {
        OutputFormat::Table => print!("{}", render_table(&report)),
        OutputFormat::Csv => print!("{}", render_csv(&report)),
        OutputFormat::Json => println!("{}", render_json(&report)),
    }
    eprintln!("wrote {} file(s) under {}", written.len(), out_dir.display());

    let all_ok = report.rows.iter().all(|r| r.status == "ok");
    if label == "history" {
        for row in &report.rows {
            for trace in &row.histories {
                println!(
                    "\n{} {}x{}x{} convergence history:",
                    trace.solver, row.nt, row.nx, row.ny
                );
                print!("{}", history_csv(&trace.records));
            }
        }
    }
    Ok(all_ok)
}

fn parse_condition_config(path: &Path, args: &mut ConditionArgs) -> Result<(), String> {
    let text =
        std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value", lineno + 1))?;
        let value = value.trim();
        match key.trim().to_ascii_lowercase().as_str() {
            "nx" => args.nx = value.parse().map_err(|_| format!("bad nx '{value}'"))?,
            "mu" => {
                args.mu = value
                    .split(',')
                    .map(|v| v.trim().parse().map_err(|_| format!("bad mu '{v}'")))
                    .collect::<Result<_, _>>()?;
            }
            "c" => args.c = value.parse().map_err(|_| format!("bad c '{value}'"))?,
            "eps_rof" => {
                args.eps_rof = value.parse().map_err(|_| format!("bad eps_rof '{value}'"))?;
            }
            other => return Err(format!("unknown condition key '{other}'")),
        }
    }
    Ok(())
}

fn run_condition(mut args: ConditionArgs) -> Result<(), String> {
    if let Some(path) = args.config.take() {
        parse_condition_config(&path, &mut args)?;
    }
    if args.mu.is_empty() {
        args.mu = vec![1e-3];
    }
    let mut csv = String::from("nx,mu,c,eps_rof,max_nt\n");
    println!("{:>6} {:>10} {:>8}", "nx", "mu", "max_nt");
    for &mu in &args.mu {
        let bound = condition_bound_max_nt(args.nx, mu, args.c, args.eps_rof);
        println!("{:>6} {:>10.1e} {:>8}", args.nx, mu, bound);
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            args.nx, mu, args.c, args.eps_rof, bound
        ));
    }
    if let Some(out) = &args.out {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| e.to_string())?;
        }
        std::fs::write(out, csv).map_err(|e| e.to_string())?;
        eprintln!("wrote {}", out.display());
    }
    Ok(())
}

fn run_predict(args: &PredictArgs) {
    println!(
        "{:>6} {:>10}   (cf = {}, p = {})",
        "nt", "speedup", args.cf, args.p
    );
    for &nt in &args.nt {
        println!("{:>6} {:>10.3}", nt, predicted_speedup(nt, args.cf, args.p));
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Refine(args) => run_study(args, "refine"),
        Command::Scale(args) => run_study(args, "scale"),
        Command::History(args) => run_study(args, "history"),
        Command::Condition(_) => {
            let Command::Condition(args) = cli.command else {
                unreachable!()
            };
            run_condition(args).map(|()| true)
        }
        Command::PredictSpeedup(args) => {
            run_predict(args);
            Ok(true)
        }
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more grids failed; see the status column");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
