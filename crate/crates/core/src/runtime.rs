//! Worker-pool execution of the decoupled build and the per-level solves.
//!
//! The build mirrors the row-partitioned algorithm: every worker advances its
//! own row batch of the running product `P^l` and right-hand side through the
//! level recursion, assembling the Jacobian rows it needs on demand from the
//! shared provider, and ships each completed batch to the worker that owns
//! that time level. The owner gathers all batches, attaches the diagonal
//! scaling, and reports the finished level. Because every kernel fixes its
//! summation order, the pool output is bit-identical to the serial build for
//! any worker count.

use std::collections::HashMap;
use std::ops::Range;
use std::sync::mpsc::{channel, Receiver, Sender};
use std::time::Instant;

use crate::band::{diagonal_of, product_pairs, BandedMatrix};
use crate::decouple::{
    build_decoupled_timed, solve_decoupled_timed, solve_level, run_paradin_engine, DecoupledLevel,
    DecoupledSystem, ParadinConfig,
};
use crate::error::{Error, Result};
use crate::grid::SpaceTimeGrid;
use crate::model::ModelSpec;

/// How the per-iteration build and solves are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Executor {
    Serial,
    WorkerPool(usize),
}

/// Contiguous near-equal row batches, one per worker; the first
/// `rows mod workers` batches carry the extra row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowPartition {
    batches: Vec<Range<usize>>,
}

impl RowPartition {
    pub fn worker_count(&self) -> usize {
        self.batches.len()
    }

    pub fn batches(&self) -> &[Range<usize>] {
        &self.batches
    }

    pub fn total_rows(&self) -> usize {
        self.batches.last().map_or(0, |b| b.end)
    }
}

pub fn partition_rows(rows: usize, worker_count: usize) -> Result<RowPartition> {
    if worker_count == 0 {
        return Err(Error::InvalidConfig("need at least one worker".into()));
    }
    if worker_count > rows {
        return Err(Error::TooManyWorkers {
            workers: worker_count,
            rows,
        });
    }
    let base = rows / worker_count;
    let extra = rows % worker_count;
    let mut batches = Vec::with_capacity(worker_count);
    let mut start = 0;
    for w in 0..worker_count {
        let len = base + usize::from(w < extra);
        batches.push(start..start + len);
        start += len;
    }
    Ok(RowPartition { batches })
}

/// Supplies Jacobian rows and residual entries per time level to build
/// workers. Rows are produced on demand so each worker can assemble exactly
/// the row window its batch requires.
pub trait LevelSystemProvider: Sync {
    /// Spatial unknown count.
    fn dimension(&self) -> usize;
    /// Number of time levels available.
    fn level_count(&self) -> usize;
    /// Shared structural offsets of every level's Jacobian.
    fn jacobian_offsets(&self) -> Vec<isize>;
    /// Writes row `row` of `A_level` as `(column, value)` pairs in ascending
    /// column order.
    fn jacobian_row(&self, level: usize, row: usize, out: &mut Vec<(usize, f64)>);
    /// Entry `index` of the level's Newton residual.
    fn residual_entry(&self, level: usize, index: usize) -> f64;
}

/// Provider over pre-assembled per-level matrices and residual vectors.
pub struct AssembledSystemProvider<'a> {
    jacobians: &'a [BandedMatrix],
    residuals: &'a [Vec<f64>],
}

impl<'a> AssembledSystemProvider<'a> {
    pub fn new(jacobians: &'a [BandedMatrix], residuals: &'a [Vec<f64>]) -> Result<Self> {
        if jacobians.is_empty() || jacobians.len() != residuals.len() {
            return Err(Error::InvalidConfig(
                "need one residual per Jacobian level".into(),
            ));
        }
        let offsets = jacobians[0].offsets();
        if !jacobians.iter().all(|a| a.offsets() == offsets) {
            return Err(Error::InvalidConfig(
                "all level Jacobians must share one sparsity pattern".into(),
            ));
        }
        Ok(AssembledSystemProvider {
            jacobians,
            residuals,
        })
    }
}

impl LevelSystemProvider for AssembledSystemProvider<'_> {
    fn dimension(&self) -> usize {
        self.jacobians[0].n()
    }

    fn level_count(&self) -> usize {
        self.jacobians.len()
    }

    fn jacobian_offsets(&self) -> Vec<isize> {
        self.jacobians[0].offsets().to_vec()
    }

    fn jacobian_row(&self, level: usize, row: usize, out: &mut Vec<(usize, f64)>) {
        out.clear();
        let a = &self.jacobians[level - 1];
        let n = a.n() as isize;
        for &off in a.offsets() {
            let col = row as isize + off;
            if (0..n).contains(&col) {
                out.push((col as usize, a.get(row, col as usize)));
            }
        }
    }

    fn residual_entry(&self, level: usize, index: usize) -> f64 {
        self.residuals[level - 1][index]
    }
}

/// Wall-clock decomposition of a parallel-in-time run.
///
/// Under a worker pool the compute phases are averaged worker-seconds (total
/// worker time in the phase divided by the worker count) and `communication_s`
/// counts channel sends, receive waits, and gather assembly, so the phases
/// remain comparable to the run's wall clock; coordinator bookkeeping is the
/// slack between `phase_sum()` and `total_s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingReport {
    pub jacobian_assembly_s: f64,
    pub product_build_s: f64,
    pub rhs_build_s: f64,
    pub level_solve_s: f64,
    pub communication_s: f64,
    pub initial_guess_s: f64,
    pub iterations: usize,
    pub total_s: f64,
}

impl TimingReport {
    pub fn phase_sum(&self) -> f64 {
        self.jacobian_assembly_s
            + self.product_build_s
            + self.rhs_build_s
            + self.level_solve_s
            + self.communication_s
            + self.initial_guess_s
    }
}

/// Accumulated per-phase seconds; shared by the serial and pool paths.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct PhaseTimes {
    pub jacobian_assembly: f64,
    pub product_build: f64,
    pub rhs_build: f64,
    pub level_solve: f64,
    pub communication: f64,
    pub initial_guess: f64,
}

impl PhaseTimes {
    pub(crate) fn add_scaled(&mut self, other: &PhaseTimes, scale: f64) {
        self.jacobian_assembly += other.jacobian_assembly * scale;
        self.product_build += other.product_build * scale;
        self.rhs_build += other.rhs_build * scale;
        self.level_solve += other.level_solve * scale;
        self.communication += other.communication * scale;
        self.initial_guess += other.initial_guess * scale;
    }

    pub(crate) fn into_report(self, iterations: usize, total_s: f64) -> TimingReport {
        TimingReport {
            jacobian_assembly_s: self.jacobian_assembly,
            product_build_s: self.product_build,
            rhs_build_s: self.rhs_build,
            level_solve_s: self.level_solve,
            communication_s: self.communication,
            initial_guess_s: self.initial_guess,
            iterations,
            total_s,
        }
    }
}

/// Worker's row batch of one completed level, shipped to the level owner.
struct RowBatch {
    level: usize,
    rows: Range<usize>,
    offsets: Vec<isize>,
    /// `values[k][r]` = `P[rows.start + r, rows.start + r + offsets[k]]`;
    /// slots whose column falls outside the matrix are unused zeros.
    values: Vec<Vec<f64>>,
    rhs: Vec<f64>,
}

enum CoordMsg {
    Level {
        level: usize,
        result: Result<DecoupledLevel>,
    },
    WorkerDone {
        times: PhaseTimes,
    },
}

/// Row-partitioned parallel construction of the decoupled system over levels
/// `1..=nt`; bit-identical to the serial build.
pub fn parallel_build_decoupled<P: LevelSystemProvider>(
    provider: &P,
    partition: &RowPartition,
    nt: usize,
) -> Result<DecoupledSystem> {
    parallel_build_decoupled_timed(provider, partition, nt, &mut PhaseTimes::default())
}

pub(crate) fn parallel_build_decoupled_timed<P: LevelSystemProvider>(
    provider: &P,
    partition: &RowPartition,
    nt: usize,
    phases: &mut PhaseTimes,
) -> Result<DecoupledSystem> {
    let n = provider.dimension();
    assert_eq!(partition.total_rows(), n, "partition does not cover the rows");
    assert!(
        nt >= 1 && nt <= provider.level_count(),
        "level count out of range"
    );
    let w = partition.worker_count();

    // A single worker degenerates to the serial code path.
    if w == 1 {
        let offsets = provider.jacobian_offsets();
        let t0 = Instant::now();
        let mut buf = Vec::with_capacity(offsets.len());
        let jacobians: Vec<BandedMatrix> = (1..=nt)
            .map(|level| {
                let mut a = BandedMatrix::new(n, offsets.clone());
                for row in 0..n {
                    provider.jacobian_row(level, row, &mut buf);
                    for &(col, val) in &buf {
                        a.set(row, col, val);
                    }
                }
                a
            })
            .collect();
        phases.jacobian_assembly += t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        let residuals: Vec<Vec<f64>> = (1..=nt)
            .map(|level| (0..n).map(|i| provider.residual_entry(level, i)).collect())
            .collect();
        phases.rhs_build += t1.elapsed().as_secs_f64();
        return build_decoupled_timed(&jacobians, &residuals, phases);
    }

    let mut levels: Vec<Option<DecoupledLevel>> = (0..nt).map(|_| None).collect();
    let mut first_error: Option<(usize, Error)> = None;

    std::thread::scope(|scope| {
        let (coord_tx, coord_rx) = channel::<CoordMsg>();
        let mut peer_txs = Vec::with_capacity(w);
        let mut peer_rxs = Vec::with_capacity(w);
        for _ in 0..w {
            let (tx, rx) = channel::<RowBatch>();
            peer_txs.push(tx);
            peer_rxs.push(rx);
        }

        for (index, inbox) in peer_rxs.into_iter().enumerate() {
            let peers = peer_txs.clone();
            let coord = coord_tx.clone();
            let rows = partition.batches()[index].clone();
            scope.spawn(move || {
                BuildWorker {
                    provider,
                    index,
                    rows,
                    worker_count: w,
                    nt,
                    n,
                    peers,
                    inbox,
                    coord,
                    times: PhaseTimes::default(),
                }
                .run();
            });
        }
        drop(peer_txs);
        drop(coord_tx);

        let mut done = 0;
        let mut finished_levels = 0;
        while done < w || finished_levels < nt {
            match coord_rx.recv() {
                Ok(CoordMsg::Level { level, result }) => {
                    finished_levels += 1;
                    match result {
                        Ok(l) => levels[level - 1] = Some(l),
                        Err(e) => {
                            if first_error.as_ref().is_none_or(|(l, _)| level < *l) {
                                first_error = Some((level, e));
                            }
                        }
                    }
                }
                Ok(CoordMsg::WorkerDone { times }) => {
                    done += 1;
                    phases.add_scaled(&times, 1.0 / w as f64);
                }
                Err(_) => {
                    if first_error.is_none() {
                        first_error = Some((
                            0,
                            Error::WorkerFailure {
                                worker: done,
                                message: "worker channel disconnected before completion".into(),
                            },
                        ));
                    }
                    break;
                }
            }
        }
    });

    if let Some((_, e)) = first_error {
        return Err(e);
    }
    Ok(DecoupledSystem {
        levels: levels.into_iter().map(Option::unwrap).collect(),
    })
}

/// Jacobian rows `k_range` of one level in per-offset layout.
struct JacobianWindow {
    start: usize,
    offsets_len: usize,
    /// `values[o * len + (k - start)]` = `A[k, k + offsets[o]]`.
    values: Vec<f64>,
    len: usize,
}

impl JacobianWindow {
    fn assemble<P: LevelSystemProvider>(
        provider: &P,
        level: usize,
        k_range: Range<usize>,
        offsets: &[isize],
        buf: &mut Vec<(usize, f64)>,
    ) -> Self {
        let len = k_range.len();
        let mut values = vec![0.0; offsets.len() * len];
        for k in k_range.clone() {
            provider.jacobian_row(level, k, buf);
            for &(col, val) in buf.iter() {
                let off = col as isize - k as isize;
                let o = offsets
                    .binary_search(&off)
                    .expect("provider row outside declared offsets");
                values[o * len + (k - k_range.start)] = val;
            }
        }
        JacobianWindow {
            start: k_range.start,
            offsets_len: offsets.len(),
            values,
            len,
        }
    }

    #[inline]
    fn get(&self, offset_index: usize, k: usize) -> f64 {
        debug_assert!(offset_index < self.offsets_len);
        self.values[offset_index * self.len + (k - self.start)]
    }
}

/// A worker's rows of the running product matrix.
struct RowBlock {
    rows: Range<usize>,
    n: usize,
    offsets: Vec<isize>,
    /// `values[k][r]` = `P[rows.start + r, rows.start + r + offsets[k]]`.
    values: Vec<Vec<f64>>,
}

impl RowBlock {
    fn zeros(rows: Range<usize>, n: usize, offsets: Vec<isize>) -> Self {
        let len = rows.len();
        RowBlock {
            rows,
            n,
            values: offsets.iter().map(|_| vec![0.0; len]).collect(),
            offsets,
        }
    }

    fn from_jacobian_rows<P: LevelSystemProvider>(
        provider: &P,
        level: usize,
        rows: Range<usize>,
        offsets: &[isize],
        buf: &mut Vec<(usize, f64)>,
    ) -> Self {
        let mut block = RowBlock::zeros(rows.clone(), provider.dimension(), offsets.to_vec());
        for row in rows.clone() {
            provider.jacobian_row(level, row, buf);
            for &(col, val) in buf.iter() {
                let off = col as isize - row as isize;
                let k = block
                    .offsets
                    .binary_search(&off)
                    .expect("provider row outside declared offsets");
                block.values[k][row - rows.start] = val;
            }
        }
        block
    }

    /// Needed Jacobian row window for the next product/rhs step.
    fn k_window(&self) -> Range<usize> {
        let lo = self.rows.start as isize + self.offsets.first().copied().unwrap_or(0);
        let hi = self.rows.end as isize + self.offsets.last().copied().unwrap_or(0);
        (lo.max(0) as usize)..(hi.min(self.n as isize) as usize)
    }

    /// `P_rows x A_level`: per output entry the terms run over ascending
    /// product offset (ascending inner index), exactly like the serial
    /// banded product.
    fn multiply(&self, a_offsets: &[isize], window: &JacobianWindow) -> RowBlock {
        let pairs = product_pairs(&self.offsets, a_offsets, self.n);
        let mut out = RowBlock::zeros(
            self.rows.clone(),
            self.n,
            pairs.iter().map(|p| p.dz).collect(),
        );
        let n = self.n as isize;
        for (zk, pair) in pairs.iter().enumerate() {
            let zd = &mut out.values[zk];
            for (r, slot) in zd.iter_mut().enumerate() {
                let i = (self.rows.start + r) as isize;
                let j = i + pair.dz;
                if !(0..n).contains(&j) {
                    continue;
                }
                let mut acc = 0.0;
                for &(p_off, pk, ak) in &pair.terms {
                    let k = i + p_off;
                    if !(0..n).contains(&k) {
                        continue;
                    }
                    acc += self.values[pk][r] * window.get(ak, k as usize);
                }
                *slot = acc;
            }
        }
        out
    }

    /// Accumulated right-hand side step
    /// `rt_new[i] = sum_k P[i,k] r[k] + rt_prev[i]` with ascending-k order.
    fn advance_rhs(&self, r_window: &[f64], window_start: usize, rt_prev: &[f64]) -> Vec<f64> {
        let n = self.n as isize;
        (0..self.rows.len())
            .map(|r| {
                let i = (self.rows.start + r) as isize;
                let mut acc = 0.0;
                for (pk, &off) in self.offsets.iter().enumerate() {
                    let k = i + off;
                    if !(0..n).contains(&k) {
                        continue;
                    }
                    acc += self.values[pk][r] * r_window[k as usize - window_start];
                }
                acc + rt_prev[r]
            })
            .collect()
    }

    fn snapshot(&self, level: usize, rhs: &[f64]) -> RowBatch {
        RowBatch {
            level,
            rows: self.rows.clone(),
            offsets: self.offsets.clone(),
            values: self.values.clone(),
            rhs: rhs.to_vec(),
        }
    }
}

/// Partially gathered level owned by a worker.
struct PartialLevel {
    matrix: BandedMatrix,
    rhs: Vec<f64>,
    batches_received: usize,
}

struct BuildWorker<'p, P: LevelSystemProvider> {
    provider: &'p P,
    index: usize,
    rows: Range<usize>,
    worker_count: usize,
    nt: usize,
    n: usize,
    peers: Vec<Sender<RowBatch>>,
    inbox: Receiver<RowBatch>,
    coord: Sender<CoordMsg>,
    times: PhaseTimes,
}

impl<P: LevelSystemProvider> BuildWorker<'_, P> {
    fn owned_level_count(&self) -> usize {
        (1..=self.nt)
            .filter(|l| (l - 1) % self.worker_count == self.index)
            .count()
    }

    fn run(mut self) {
        let a_offsets = self.provider.jacobian_offsets();
        let mut buf: Vec<(usize, f64)> = Vec::with_capacity(a_offsets.len());
        let mut pending: HashMap<usize, PartialLevel> = HashMap::new();
        let mut remaining_owned = self.owned_level_count();

        let mut block = RowBlock::zeros(self.rows.clone(), self.n, vec![0]);
        let mut rhs: Vec<f64> = Vec::new();

        for level in 1..=self.nt {
            if level == 1 {
                let t0 = Instant::now();
                block = RowBlock::from_jacobian_rows(
                    self.provider,
                    1,
                    self.rows.clone(),
                    &a_offsets,
                    &mut buf,
                );
                self.times.jacobian_assembly += t0.elapsed().as_secs_f64();

                let t1 = Instant::now();
                rhs = self
                    .rows
                    .clone()
                    .map(|i| self.provider.residual_entry(1, i))
                    .collect();
                self.times.rhs_build += t1.elapsed().as_secs_f64();
            } else {
                let k_range = block.k_window();

                let t0 = Instant::now();
                let window = JacobianWindow::assemble(
                    self.provider,
                    level,
                    k_range.clone(),
                    &a_offsets,
                    &mut buf,
                );
                self.times.jacobian_assembly += t0.elapsed().as_secs_f64();

                // Right-hand side first: it uses the previous product rows.
                let t1 = Instant::now();
                let r_window: Vec<f64> = k_range
                    .clone()
                    .map(|k| self.provider.residual_entry(level, k))
                    .collect();
                rhs = block.advance_rhs(&r_window, k_range.start, &rhs);
                self.times.rhs_build += t1.elapsed().as_secs_f64();

                let t2 = Instant::now();
                block = block.multiply(&a_offsets, &window);
                self.times.product_build += t2.elapsed().as_secs_f64();
            }

            let owner = (level - 1) % self.worker_count;
            let t3 = Instant::now();
            let batch = block.snapshot(level, &rhs);
            let _ = self.peers[owner].send(batch);
            self.times.communication += t3.elapsed().as_secs_f64();

            // Gather whatever has arrived for the levels this worker owns.
            let t4 = Instant::now();
            while let Ok(batch) = self.inbox.try_recv() {
                self.handle_batch(batch, &mut pending, &mut remaining_owned);
            }
            self.times.communication += t4.elapsed().as_secs_f64();
        }

        while remaining_owned > 0 {
            let t0 = Instant::now();
            match self.inbox.recv() {
                Ok(batch) => {
                    self.handle_batch(batch, &mut pending, &mut remaining_owned);
                    self.times.communication += t0.elapsed().as_secs_f64();
                }
                Err(_) => break,
            }
        }

        let _ = self.coord.send(CoordMsg::WorkerDone { times: self.times });
    }

    fn handle_batch(
        &self,
        batch: RowBatch,
        pending: &mut HashMap<usize, PartialLevel>,
        remaining_owned: &mut usize,
    ) {
        let entry = pending.entry(batch.level).or_insert_with(|| PartialLevel {
            matrix: BandedMatrix::new(self.n, batch.offsets.clone()),
            rhs: vec![0.0; self.n],
            batches_received: 0,
        });

        // Write the batch rows into the owned level; batches cover disjoint
        // row ranges, so arrival order cannot matter.
        for (k, &off) in batch.offsets.iter().enumerate() {
            let idx = entry
                .matrix
                .offsets()
                .binary_search(&off)
                .expect("assembled offsets must agree");
            let diag = entry.matrix.diag_at_mut(idx);
            for r in 0..batch.rows.len() {
                let row = (batch.rows.start + r) as isize;
                let col = row + off;
                if (0..self.n as isize).contains(&col) {
                    diag[row.min(col) as usize] = batch.values[k][r];
                }
            }
        }
        entry.rhs[batch.rows.clone()].copy_from_slice(&batch.rhs);
        entry.batches_received += 1;

        if entry.batches_received == self.worker_count {
            let mut done = pending.remove(&batch.level).unwrap();
            done.matrix.prune_zero_diagonals();
            let result = diagonal_of(&done.matrix).map(|scaling| DecoupledLevel {
                matrix: done.matrix,
                rhs: done.rhs,
                scaling,
            });
            let _ = self.coord.send(CoordMsg::Level {
                level: batch.level,
                result,
            });
            *remaining_owned -= 1;
        }
    }
}

/// Dispatches the independent level solves across `min(worker_count, nt)`
/// workers, level `l` on worker `(l-1) mod w`; output order is by level and
/// values are identical to the serial solve.
pub fn parallel_solve_levels(
    sys: &DecoupledSystem,
    worker_count: usize,
    preconditioning: bool,
) -> Result<Vec<Vec<f64>>> {
    parallel_solve_levels_timed(sys, worker_count, preconditioning, &mut PhaseTimes::default())
}

pub(crate) fn parallel_solve_levels_timed(
    sys: &DecoupledSystem,
    worker_count: usize,
    preconditioning: bool,
    phases: &mut PhaseTimes,
) -> Result<Vec<Vec<f64>>> {
    if worker_count == 0 {
        return Err(Error::InvalidConfig("need at least one worker".into()));
    }
    let nt = sys.level_count();
    let w = worker_count.min(nt);
    if w <= 1 {
        return solve_decoupled_timed(sys, preconditioning, phases);
    }

    let mut results: Vec<Option<Result<Vec<f64>>>> = (0..nt).map(|_| None).collect();
    std::thread::scope(|scope| {
        let (tx, rx) = channel::<(usize, Result<Vec<f64>>, PhaseTimes)>();
        for widx in 0..w {
            let tx = tx.clone();
            let levels = &sys.levels;
            scope.spawn(move || {
                let mut times = PhaseTimes::default();
                for level in (widx + 1..=nt).step_by(w) {
                    let t0 = Instant::now();
                    let solved = solve_level(&levels[level - 1], level, preconditioning);
                    times.level_solve += t0.elapsed().as_secs_f64();
                    let t1 = Instant::now();
                    let _ = tx.send((level, solved, PhaseTimes::default()));
                    times.communication += t1.elapsed().as_secs_f64();
                }
                let _ = tx.send((0, Ok(Vec::new()), times));
            });
        }
        drop(tx);

        let mut done = 0;
        while done < w {
            match rx.recv() {
                Ok((0, _, times)) => {
                    done += 1;
                    phases.add_scaled(&times, 1.0 / w as f64);
                }
                Ok((level, result, _)) => results[level - 1] = Some(result),
                Err(_) => break,
            }
        }
    });

    let mut out = Vec::with_capacity(nt);
    let mut first_error: Option<Error> = None;
    for (k, slot) in results.into_iter().enumerate() {
        match slot {
            Some(Ok(v)) => out.push(v),
            Some(Err(e)) => {
                if first_error.is_none() {
                    first_error = Some(e);
                }
            }
            None => {
                if first_error.is_none() {
                    first_error = Some(Error::WorkerFailure {
                        worker: (k) % w,
                        message: format!("no result produced for level {}", k + 1),
                    });
                }
            }
        }
    }
    match first_error {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// Runs the parallel-in-time solver under its configured executor and
/// reports the per-phase wall-clock decomposition.
pub fn measure_run(
    grid: &SpaceTimeGrid,
    model: &ModelSpec,
    cfg: &ParadinConfig,
) -> Result<TimingReport> {
    let (_, _, report) = run_paradin_engine(grid, model, cfg)?;
    Ok(report)
}
