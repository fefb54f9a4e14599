//! Report writers: CSV (fixed column order), schema-versioned JSON, aligned
//! text tables, and per-iteration convergence-history CSVs.
//!
//! CSV columns, in order:
//! `nt,nx,ny,workers,tolerance,reference_error,seq_l1,seq_l2,seq_linf,seq_rate,
//! seq_iterations,seq_wall_s,par_l1,par_l2,par_linf,par_rate,par_iterations,
//! par_wall_s,serial_paradin_wall_s,speedup,efficiency,max_solver_diff,status`
//!
//! History CSVs carry `iteration,update_norm,residual_norm` per Newton
//! iteration and are named `history_<label>_<solver>_<nt>x<nx>x<ny>.csv`.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use crate::experiment::{ErrorReport, GridRow, SolverColumn};
use crate::norms::NormKind;

pub const CSV_HEADER: &str = "nt,nx,ny,workers,tolerance,reference_error,seq_l1,seq_l2,seq_linf,seq_rate,seq_iterations,seq_wall_s,par_l1,par_l2,par_linf,par_rate,par_iterations,par_wall_s,serial_paradin_wall_s,speedup,efficiency,max_solver_diff,status";

fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or(String::new(), |x| x.to_string())
}

fn csv_quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn column_cells(c: &Option<SolverColumn>) -> [String; 6] {
    match c {
        Some(c) => [
            c.l1.to_string(),
            c.l2.to_string(),
            c.linf.to_string(),
            opt(&c.rate),
            c.iterations.to_string(),
            c.wall_s.to_string(),
        ],
        None => Default::default(),
    }
}

pub fn render_csv(report: &ErrorReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in &report.rows {
        let seq = column_cells(&row.sequential);
        let par = column_cells(&row.paradin);
        let cells = [
            row.nt.to_string(),
            row.nx.to_string(),
            row.ny.to_string(),
            opt(&row.workers),
            opt(&row.tolerance),
            opt(&row.reference_error),
            seq[0].clone(),
            seq[1].clone(),
            seq[2].clone(),
            seq[3].clone(),
            seq[4].clone(),
            seq[5].clone(),
            par[0].clone(),
            par[1].clone(),
            par[2].clone(),
            par[3].clone(),
            par[4].clone(),
            par[5].clone(),
            opt(&row.serial_paradin_wall_s),
            opt(&row.speedup),
            opt(&row.efficiency),
            opt(&row.max_solver_diff),
            csv_quote(&row.status),
        ];
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn render_json(report: &ErrorReport) -> String {
    serde_json::to_string_pretty(report).expect("report serialization cannot fail")
}

fn norm_of(c: &SolverColumn, norm: NormKind) -> f64 {
    match norm {
        NormKind::L1 => c.l1,
        NormKind::L2 => c.l2,
        NormKind::Linf => c.linf,
    }
}

/// Aligned text table; the error column uses the study's reporting norm and
/// speedup/efficiency are labeled as host measurements.
pub fn render_table(report: &ErrorReport) -> String {
    let norm: NormKind = report.norm.parse().unwrap_or(NormKind::Linf);
    let mut lines: Vec<Vec<String>> = Vec::new();
    lines.push(
        [
            "grid".into(),
            format!("seq {}", report.norm),
            "rate".into(),
            "iters".into(),
            "wall(s)".into(),
            format!("pit {}", report.norm),
            "rate".into(),
            "iters".into(),
            "wall(s)".into(),
            "serial-pit(s)".into(),
            "speedup*".into(),
            "eff*".into(),
            "diff".into(),
            "status".into(),
        ]
        .to_vec(),
    );
    for row in &report.rows {
        let fmt_col = |c: &Option<SolverColumn>| -> [String; 4] {
            match c {
                Some(c) => [
                    format!("{:.3e}", norm_of(c, norm)),
                    c.rate.map_or("-".into(), |r| format!("{r:.2}")),
                    format!("{:.2}", c.iterations),
                    format!("{:.3}", c.wall_s),
                ],
                None => ["-".into(), "-".into(), "-".into(), "-".into()],
            }
        };
        let seq = fmt_col(&row.sequential);
        let par = fmt_col(&row.paradin);
        lines.push(
            [
                format!("{}x{}x{}", row.nt, row.nx, row.ny),
                seq[0].clone(),
                seq[1].clone(),
                seq[2].clone(),
                seq[3].clone(),
                par[0].clone(),
                par[1].clone(),
                par[2].clone(),
                par[3].clone(),
                row.serial_paradin_wall_s
                    .map_or("-".into(), |v| format!("{v:.3}")),
                row.speedup.map_or("-".into(), |v| format!("{v:.2}")),
                row.efficiency.map_or("-".into(), |v| format!("{:.0}%", v * 100.0)),
                row.max_solver_diff
                    .map_or("-".into(), |v| format!("{v:.1e}")),
                row.status.clone(),
            ]
            .to_vec(),
        );
    }

    let cols = lines[0].len();
    let widths: Vec<usize> = (0..cols)
        .map(|c| lines.iter().map(|l| l[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = format!("{} study: model {}\n", report.label, report.model);
    for line in &lines {
        let mut rendered = String::new();
        for (c, cell) in line.iter().enumerate() {
            if c > 0 {
                rendered.push_str("  ");
            }
            write!(rendered, "{cell:>width$}", width = widths[c]).unwrap();
        }
        out.push_str(rendered.trim_end());
        out.push('\n');
    }
    out.push_str("* wall-clock columns are measured on this host\n");
    out
}

pub fn history_csv(records: &[paradin_core::IterationRecord]) -> String {
    let mut out = String::from("iteration,update_norm,residual_norm\n");
    for r in records {
        writeln!(out, "{},{},{}", r.iteration, r.update_norm, r.residual_norm).unwrap();
    }
    out
}

fn history_file_name(label: &str, row: &GridRow, solver: &str) -> String {
    format!(
        "history_{label}_{solver}_{}x{}x{}.csv",
        row.nt, row.nx, row.ny
    )
}

/// Writes the CSV, JSON, and text forms of the report plus one convergence
/// history CSV per (grid, solver) into `out_dir`; returns the written paths.
pub fn emit_report(report: &ErrorReport, out_dir: &Path) -> io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let base = out_dir.join(&report.label);

    let csv_path = base.with_extension("csv");
    std::fs::write(&csv_path, render_csv(report))?;
    written.push(csv_path);

    let json_path = base.with_extension("json");
    std::fs::write(&json_path, render_json(report))?;
    written.push(json_path);

    let txt_path = base.with_extension("txt");
    std::fs::write(&txt_path, render_table(report))?;
    written.push(txt_path);

    for row in &report.rows {
        for trace in &row.histories {
            let path = out_dir.join(history_file_name(&report.label, row, trace.solver));
            std::fs::write(&path, history_csv(&trace.records))?;
            written.push(path);
        }
    }
    Ok(written)
}
