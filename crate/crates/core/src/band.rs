//! Banded matrices in diagonal storage and the kernels the decoupled solver
//! is built on: sparsity-aware banded products with operation counting,
//! banded matrix-vector products, diagonal row scaling, and a no-pivot
//! envelope LU solve.
//!
//! Every kernel accumulates floating-point sums in a fixed order (ascending
//! inner index), so serial and row-partitioned parallel executions produce
//! bit-identical results.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Pivot magnitudes below this are treated as breakdown rather than being
/// allowed to propagate NaN/Inf through the solve.
pub const DEFAULT_PIVOT_FLOOR: f64 = 1e-300;

/// Square matrix stored by diagonals. `offsets` holds the strictly increasing
/// `col - row` indices of the stored diagonals; `diags[k]` holds the
/// `n - |offsets[k]|` entries of diagonal `k`, ordered by `min(row, col)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix {
    n: usize,
    offsets: Vec<isize>,
    diags: Vec<Vec<f64>>,
}

impl BandedMatrix {
    /// Zero matrix with the given structural diagonals.
    pub fn new(n: usize, mut offsets: Vec<isize>) -> Self {
        assert!(n > 0, "matrix dimension must be positive");
        offsets.sort_unstable();
        offsets.dedup();
        assert!(
            offsets.iter().all(|o| o.unsigned_abs() < n),
            "offset out of range for dimension {n}"
        );
        let diags = offsets
            .iter()
            .map(|o| vec![0.0; n - o.unsigned_abs()])
            .collect();
        BandedMatrix { n, offsets, diags }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = BandedMatrix::new(n, vec![0]);
        m.diags[0].fill(1.0);
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn offsets(&self) -> &[isize] {
        &self.offsets
    }

    /// Stored entry count (structural nonzeros).
    pub fn nnz(&self) -> usize {
        self.diags.iter().map(Vec::len).sum()
    }

    /// Lower and upper bandwidths `(kl, ku)`.
    pub fn bandwidths(&self) -> (usize, usize) {
        let kl = self.offsets.first().map_or(0, |o| (-o).max(0) as usize);
        let ku = self.offsets.last().map_or(0, |o| (*o).max(0) as usize);
        (kl, ku)
    }

    pub fn diagonal(&self, offset: isize) -> Option<&[f64]> {
        self.offset_index(offset).map(|k| self.diags[k].as_slice())
    }

    fn offset_index(&self, offset: isize) -> Option<usize> {
        self.offsets.binary_search(&offset).ok()
    }

    /// Position of `(i, j)` along its diagonal.
    #[inline]
    fn slot(i: usize, j: usize) -> usize {
        i.min(j)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.n && j < self.n, "index out of range");
        match self.offset_index(j as isize - i as isize) {
            Some(k) => self.diags[k][Self::slot(i, j)],
            None => 0.0,
        }
    }

    /// Sets `(i, j)`; the diagonal must be structurally present.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        assert!(i < self.n && j < self.n, "index out of range");
        let k = self
            .offset_index(j as isize - i as isize)
            .expect("diagonal not present in structure");
        self.diags[k][Self::slot(i, j)] = value;
    }

    /// Number of diagonals holding at least one nonzero entry.
    pub fn nonzero_diagonal_count(&self) -> usize {
        self.diags
            .iter()
            .filter(|d| d.iter().any(|&v| v != 0.0))
            .count()
    }

    /// Drops diagonals whose entries are all exactly zero.
    pub fn prune_zero_diagonals(&mut self) {
        let keep: Vec<bool> = self
            .diags
            .iter()
            .map(|d| d.iter().any(|&v| v != 0.0))
            .collect();
        if keep.iter().all(|&k| k) {
            return;
        }
        let mut offsets = Vec::with_capacity(self.offsets.len());
        let mut diags = Vec::with_capacity(self.diags.len());
        for (idx, keep_it) in keep.iter().enumerate() {
            if *keep_it {
                offsets.push(self.offsets[idx]);
                diags.push(std::mem::take(&mut self.diags[idx]));
            }
        }
        // A matrix with no nonzero diagonal keeps an explicit zero main
        // diagonal so the structure stays non-degenerate.
        if offsets.is_empty() {
            offsets.push(0);
            diags.push(vec![0.0; self.n]);
        }
        self.offsets = offsets;
        self.diags = diags;
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n]; self.n];
        for (k, &off) in self.offsets.iter().enumerate() {
            for (slot, &v) in self.diags[k].iter().enumerate() {
                let i = slot + (-off).max(0) as usize;
                let j = slot + off.max(0) as usize;
                out[i][j] = v;
            }
        }
        out
    }

    /// Debug text form: header `n offsets...`, then one `offset: values` line
    /// per stored diagonal.
    pub fn dump_text(&self) -> String {
        let mut s = String::new();
        write!(s, "{}", self.n).unwrap();
        for off in &self.offsets {
            write!(s, " {off}").unwrap();
        }
        s.push('\n');
        for (k, off) in self.offsets.iter().enumerate() {
            write!(s, "{off}:").unwrap();
            for v in &self.diags[k] {
                write!(s, " {v}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    #[inline]
    pub(crate) fn diag_at_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.diags[k]
    }
}

/// Multiply/add tallies for a banded product.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct OpCounter {
    pub multiplies: u64,
    pub adds: u64,
}

impl OpCounter {
    pub fn total(&self) -> u64 {
        self.multiplies + self.adds
    }
}

/// Main-diagonal row scaling: applying it to a system divides row `i` of the
/// matrix and entry `i` of the right-hand side by the stored diagonal entry.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalScaling {
    diag: Vec<f64>,
}

impl DiagonalScaling {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.diag
    }

    #[inline]
    fn row_factor(&self, i: usize) -> f64 {
        self.diag[i]
    }
}

/// Extracts the main diagonal of `x` as a row scaling.
pub fn diagonal_of(x: &BandedMatrix) -> Result<DiagonalScaling> {
    diagonal_of_with_floor(x, DEFAULT_PIVOT_FLOOR)
}

pub fn diagonal_of_with_floor(x: &BandedMatrix, floor: f64) -> Result<DiagonalScaling> {
    let diag = x
        .diagonal(0)
        .expect("main diagonal not stored")
        .to_vec();
    for (row, &v) in diag.iter().enumerate() {
        if v.abs() < floor {
            return Err(Error::ZeroDiagonal {
                row,
                magnitude: v.abs(),
                floor,
            });
        }
    }
    Ok(DiagonalScaling { diag })
}

/// Banded product `Z = X · Y` in diagonal storage.
///
/// Only index pairs where both factors are structurally nonzero contribute;
/// per output entry the summation runs over ascending inner index `k`, which
/// makes the result independent of how rows are partitioned across workers.
/// Diagonals of the result that come out exactly zero are pruned.
pub fn band_matmul(
    x: &BandedMatrix,
    y: &BandedMatrix,
    mut counter: Option<&mut OpCounter>,
) -> BandedMatrix {
    assert_eq!(x.n, y.n, "dimension mismatch");
    let n = x.n;

    let pairs = product_pairs(&x.offsets, &y.offsets, n);

    let mut z = BandedMatrix::new(n, pairs.iter().map(|p| p.dz).collect());
    for (zk, pair) in pairs.iter().enumerate() {
        let dz = pair.dz;
        let lo = (-dz).max(0) as usize;
        let hi = n - dz.max(0) as usize;
        let zd = &mut z.diags[zk];
        for i in lo..hi {
            let j = (i as isize + dz) as usize;
            let mut acc = 0.0;
            let mut terms = 0u64;
            for &(ox, xk, yk) in &pair.terms {
                let k = i as isize + ox;
                if k < 0 || k >= n as isize {
                    continue;
                }
                let k = k as usize;
                let xv = x.diags[xk][BandedMatrix::slot(i, k)];
                let yv = y.diags[yk][BandedMatrix::slot(k, j)];
                acc += xv * yv;
                terms += 1;
            }
            zd[BandedMatrix::slot(i, j)] = acc;
            if let Some(c) = counter.as_deref_mut() {
                c.multiplies += terms;
                c.adds += terms.saturating_sub(1);
            }
        }
    }
    z.prune_zero_diagonals();
    z
}

pub(crate) struct ProductPair {
    pub dz: isize,
    /// Contributing `(x_offset, x_diag_index, y_diag_index)` triples in
    /// ascending x-offset order, i.e. ascending inner index `k = i + x_offset`.
    pub terms: Vec<(isize, usize, usize)>,
}

pub(crate) fn product_pairs(
    x_offsets: &[isize],
    y_offsets: &[isize],
    n: usize,
) -> Vec<ProductPair> {
    let mut dzs = BTreeSet::new();
    for &ox in x_offsets {
        for &oy in y_offsets {
            let dz = ox + oy;
            if dz.unsigned_abs() < n {
                dzs.insert(dz);
            }
        }
    }
    dzs.into_iter()
        .map(|dz| {
            let terms = x_offsets
                .iter()
                .enumerate()
                .filter_map(|(xk, &ox)| {
                    let oy = dz - ox;
                    y_offsets
                        .binary_search(&oy)
                        .ok()
                        .map(|yk| (ox, xk, yk))
                })
                .collect();
            ProductPair { dz, terms }
        })
        .collect()
}

/// Banded matrix-vector product with ascending inner-index summation order.
pub fn band_matvec(x: &BandedMatrix, v: &[f64]) -> Vec<f64> {
    assert_eq!(x.n, v.len(), "dimension mismatch");
    let mut out = vec![0.0; x.n];
    for (k, &off) in x.offsets.iter().enumerate() {
        let row0 = (-off).max(0) as usize;
        let col0 = off.max(0) as usize;
        for (slot, &xv) in x.diags[k].iter().enumerate() {
            out[row0 + slot] += xv * v[col0 + slot];
        }
    }
    out
}

/// Direct solve of `A x = b` by in-band LU without pivoting.
///
/// The factorization fills the dense envelope between the extreme offsets of
/// `A`. If `scaling` is given, row `i` of `A` and `b[i]` are divided by the
/// scaling entry before factorization.
pub fn band_lu_solve(
    a: &BandedMatrix,
    b: &[f64],
    scaling: Option<&DiagonalScaling>,
) -> Result<Vec<f64>> {
    band_lu_solve_with_floor(a, b, scaling, DEFAULT_PIVOT_FLOOR)
}

pub fn band_lu_solve_with_floor(
    a: &BandedMatrix,
    b: &[f64],
    scaling: Option<&DiagonalScaling>,
    pivot_floor: f64,
) -> Result<Vec<f64>> {
    let n = a.n;
    assert_eq!(b.len(), n, "dimension mismatch");
    if let Some(s) = scaling {
        assert_eq!(s.len(), n, "scaling length mismatch");
    }
    let (kl, ku) = a.bandwidths();
    let w = kl + ku + 1;

    // Row-major envelope: env[i*w + (j - i + kl)] = A[i][j].
    let mut env = vec![0.0; n * w];
    for (k, &off) in a.offsets.iter().enumerate() {
        let band_col = (off + kl as isize) as usize;
        let row0 = (-off).max(0) as usize;
        for (slot, &v) in a.diags[k].iter().enumerate() {
            env[(row0 + slot) * w + band_col] = v;
        }
    }
    let mut rhs = b.to_vec();
    if let Some(s) = scaling {
        for i in 0..n {
            let f = s.row_factor(i);
            for c in 0..w {
                env[i * w + c] /= f;
            }
            rhs[i] /= f;
        }
    }

    // Factor. Multipliers are stored in place of the eliminated entries.
    for col in 0..n {
        let piv = env[col * w + kl];
        if piv.abs() < pivot_floor {
            return Err(Error::SingularPivot {
                row: col,
                magnitude: piv.abs(),
                floor: pivot_floor,
                level: None,
            });
        }
        let last_row = (col + kl).min(n - 1);
        for i in col + 1..=last_row {
            // Band column of `col` within row i.
            let c0 = col + kl - i;
            let m = env[i * w + c0] / piv;
            env[i * w + c0] = m;
            if m != 0.0 {
                let last_col = (col + ku).min(n - 1);
                for j in col + 1..=last_col {
                    env[i * w + (j + kl - i)] -= m * env[col * w + (j + kl - col)];
                }
            }
        }
    }

    // Forward substitution with the unit lower factor.
    for i in 1..n {
        let j0 = i.saturating_sub(kl);
        let mut acc = rhs[i];
        for j in j0..i {
            acc -= env[i * w + (j + kl - i)] * rhs[j];
        }
        rhs[i] = acc;
    }
    // Back substitution with the upper factor.
    for i in (0..n).rev() {
        let j1 = (i + ku).min(n - 1);
        let mut acc = rhs[i];
        for j in i + 1..=j1 {
            acc -= env[i * w + (j + kl - i)] * rhs[j];
        }
        rhs[i] = acc / env[i * w + kl];
    }
    Ok(rhs)
}

#[cfg(test)]
pub(crate) mod dense_oracle {
    //! Brute-force dense reference implementations used only by tests.
    #![allow(clippy::needless_range_loop)]

    pub fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = a.len();
        let mut out = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += a[i][k] * b[k][j];
                }
                out[i][j] = acc;
            }
        }
        out
    }

    pub fn matvec(a: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
        a.iter()
            .map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum())
            .collect()
    }

    /// Dense LU solve with partial pivoting.
    pub fn solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        let n = a.len();
        let mut m: Vec<Vec<f64>> = a.to_vec();
        let mut x = b.to_vec();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&p, &q| m[p][col].abs().total_cmp(&m[q][col].abs()))
                .unwrap();
            m.swap(col, piv);
            x.swap(col, piv);
            assert!(m[col][col].abs() > 1e-300, "singular dense system");
            for i in col + 1..n {
                let f = m[i][col] / m[col][col];
                m[i][col] = 0.0;
                for j in col + 1..n {
                    let upd = f * m[col][j];
                    m[i][j] -= upd;
                }
                x[i] -= f * x[col];
            }
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..n {
                acc -= m[i][j] * x[j];
            }
            x[i] = acc / m[i][i];
        }
        x
    }

    pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }
}
