#![allow(dead_code)] // shared across test binaries with different needs
#![allow(clippy::needless_range_loop)]

//! Dense brute-force oracles shared by the integration tests.

use paradin_core::BandedMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Dense LU solve with partial pivoting.
pub fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
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
                m[i][j] -= f * m[col][j];
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

/// Dense forward substitution through the block-bidiagonal system
/// `A_n du^n - du^{n-1} = r^n`: the reference the decoupled solver must match.
pub fn block_forward_substitution(
    jacobians: &[BandedMatrix],
    residuals: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(jacobians.len());
    for (l, a) in jacobians.iter().enumerate() {
        let mut rhs = residuals[l].clone();
        if let Some(prev) = out.last() {
            for (r, p) in rhs.iter_mut().zip(prev) {
                *r += p;
            }
        }
        out.push(dense_solve(&a.to_dense(), &rhs));
    }
    out
}

/// Random diagonally dominant matrix on the 5-offset stencil pattern
/// `{0, +-1, +-stride}`.
pub fn random_stencil_matrix(rng: &mut ChaCha8Rng, n: usize, stride: usize) -> BandedMatrix {
    let s = stride as isize;
    let mut m = BandedMatrix::new(n, vec![-s, -1, 0, 1, s]);
    for i in 0..n {
        for off in [-s, -1, 1, s] {
            let j = i as isize + off;
            if (0..n as isize).contains(&j) {
                m.set(i, j as usize, rng.gen_range(-0.45..0.45));
            }
        }
        m.set(i, i, rng.gen_range(2.0..3.0));
    }
    m
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(1e-30f64, |m, v| m.max(v.abs()));
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0f64, f64::max)
        / scale
}
