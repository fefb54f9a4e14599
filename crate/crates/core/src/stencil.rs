//! BDF1 + 5-point central discretization: the nonlinear spatial operator,
//! per-level Newton residuals, and the pentadiagonal Jacobian blocks
//! `A = I + tau dF/du`.
//!
//! All assembly goes through per-row kernels ([`jacobian_row`],
//! [`residual_entry`]) so that whole-matrix assembly and the row-windowed
//! assembly done by parallel build workers produce bit-identical values.

use crate::band::BandedMatrix;
use crate::grid::SpaceTimeGrid;
use crate::model::ModelSpec;

/// Face viscosity: the viscosity law evaluated at the face-averaged state.
/// Preserves second-order accuracy of the conservative stencil and is
/// symmetric in its arguments.
#[inline]
pub fn face_viscosity(model: &ModelSpec, u_left: f64, u_right: f64) -> f64 {
    model.viscosity(0.5 * (u_left + u_right))
}

/// Values at the four neighbors of interior node `(i, j)`: unknowns where the
/// neighbor is interior, Dirichlet data otherwise.
struct NodeNeighborhood {
    c: f64,
    e: f64,
    w: f64,
    n: f64,
    s: f64,
    /// Interior linear indices of the neighbors that are unknowns.
    east: Option<usize>,
    west: Option<usize>,
    north: Option<usize>,
    south: Option<usize>,
}

#[inline]
fn neighborhood(
    grid: &SpaceTimeGrid,
    model: &ModelSpec,
    u: &[f64],
    t: f64,
    row: usize,
) -> NodeNeighborhood {
    let (i, j) = grid.node(row);
    let nx = grid.nx();
    let ny = grid.ny();
    let b = nx - 1;

    let east = (i + 1 < nx).then(|| row + 1);
    let west = (i > 1).then(|| row - 1);
    let north = (j + 1 < ny).then(|| row + b);
    let south = (j > 1).then(|| row - b);

    NodeNeighborhood {
        c: u[row],
        e: east.map_or_else(|| model.boundary_value(grid.x(i + 1), grid.y(j), t), |l| u[l]),
        w: west.map_or_else(|| model.boundary_value(grid.x(i - 1), grid.y(j), t), |l| u[l]),
        n: north.map_or_else(|| model.boundary_value(grid.x(i), grid.y(j + 1), t), |l| u[l]),
        s: south.map_or_else(|| model.boundary_value(grid.x(i), grid.y(j - 1), t), |l| u[l]),
        east,
        west,
        north,
        south,
    }
}

/// One entry of the discrete spatial operator `F(u) - q`: central flux
/// differences plus the conservative viscous stencil, with boundary neighbors
/// replaced by Dirichlet data at time `t`.
#[inline]
pub(crate) fn operator_entry(
    grid: &SpaceTimeGrid,
    model: &ModelSpec,
    u: &[f64],
    t: f64,
    row: usize,
) -> f64 {
    let nb = neighborhood(grid, model, u, t, row);
    let hx2 = grid.hx() * grid.hx();
    let hy2 = grid.hy() * grid.hy();

    let mu_e = face_viscosity(model, nb.c, nb.e);
    let mu_w = face_viscosity(model, nb.w, nb.c);
    let mu_n = face_viscosity(model, nb.c, nb.n);
    let mu_s = face_viscosity(model, nb.s, nb.c);

    let convective = (model.inviscid_flux(nb.e) - model.inviscid_flux(nb.w)) / (2.0 * grid.hx())
        + (model.inviscid_flux(nb.n) - model.inviscid_flux(nb.s)) / (2.0 * grid.hy());
    let viscous_x = (mu_e * (nb.e - nb.c) - mu_w * (nb.c - nb.w)) / hx2;
    let viscous_y = (mu_n * (nb.n - nb.c) - mu_s * (nb.c - nb.s)) / hy2;

    convective - viscous_x - viscous_y
}

/// Discrete spatial operator over the whole level.
pub fn spatial_operator(grid: &SpaceTimeGrid, model: &ModelSpec, u: &[f64], t: f64) -> Vec<f64> {
    assert_eq!(u.len(), grid.unknowns(), "field length mismatch");
    (0..grid.unknowns())
        .map(|row| operator_entry(grid, model, u, t, row))
        .collect()
}

/// One entry of the per-level Newton residual
/// `r = -[(u_n - u_prev) + tau (F(u_n) - q)]`.
#[inline]
pub(crate) fn residual_entry(
    grid: &SpaceTimeGrid,
    model: &ModelSpec,
    u_n: &[f64],
    u_prev: &[f64],
    t_n: f64,
    row: usize,
) -> f64 {
    -((u_n[row] - u_prev[row]) + grid.tau() * operator_entry(grid, model, u_n, t_n, row))
}

/// Per-level Newton residual over the whole level.
pub fn step_residual(
    grid: &SpaceTimeGrid,
    model: &ModelSpec,
    u_n: &[f64],
    u_prev: &[f64],
    t_n: f64,
) -> Vec<f64> {
    assert_eq!(u_n.len(), grid.unknowns(), "field length mismatch");
    assert_eq!(u_prev.len(), grid.unknowns(), "field length mismatch");
    (0..grid.unknowns())
        .map(|row| residual_entry(grid, model, u_n, u_prev, t_n, row))
        .collect()
}

/// The structural offsets of every Jacobian block: `{0, ±1, ±(nx-1)}`,
/// restricted to offsets that exist for the interior unknown count (a 2x2
/// grid has a single unknown and no neighbor couplings at all).
pub fn jacobian_offsets(grid: &SpaceTimeGrid) -> Vec<isize> {
    let ns = grid.unknowns() as isize;
    let b = (grid.nx() - 1) as isize;
    let mut offs: Vec<isize> = [-b, -1, 0, 1, b]
        .into_iter()
        .filter(|o| o.abs() < ns)
        .collect();
    offs.sort_unstable();
    offs.dedup();
    offs
}

/// Row of `A = I + tau dF/du` as up to five `(column, value)` entries in
/// ascending column order. Couplings to boundary nodes are dropped; their
/// contribution lives in the Dirichlet data.
pub(crate) fn jacobian_row(
    grid: &SpaceTimeGrid,
    model: &ModelSpec,
    u: &[f64],
    t: f64,
    row: usize,
    out: &mut Vec<(usize, f64)>,
) {
    out.clear();
    let nb = neighborhood(grid, model, u, t, row);
    let tau = grid.tau();
    let hx2 = grid.hx() * grid.hx();
    let hy2 = grid.hy() * grid.hy();

    let mu_e = face_viscosity(model, nb.c, nb.e);
    let mu_w = face_viscosity(model, nb.w, nb.c);
    let mu_n = face_viscosity(model, nb.c, nb.n);
    let mu_s = face_viscosity(model, nb.s, nb.c);
    // d(face viscosity)/d(either argument) = mu'(mean)/2.
    let dmu_e = 0.5 * model.viscosity_derivative(0.5 * (nb.c + nb.e));
    let dmu_w = 0.5 * model.viscosity_derivative(0.5 * (nb.w + nb.c));
    let dmu_n = 0.5 * model.viscosity_derivative(0.5 * (nb.c + nb.n));
    let dmu_s = 0.5 * model.viscosity_derivative(0.5 * (nb.s + nb.c));

    let d_center = (mu_e + mu_w - dmu_e * (nb.e - nb.c) + dmu_w * (nb.c - nb.w)) / hx2
        + (mu_n + mu_s - dmu_n * (nb.n - nb.c) + dmu_s * (nb.c - nb.s)) / hy2;

    if let Some(col) = nb.south {
        let d = -model.inviscid_flux_derivative(nb.s) / (2.0 * grid.hy())
            + (dmu_s * (nb.c - nb.s) - mu_s) / hy2;
        out.push((col, tau * d));
    }
    if let Some(col) = nb.west {
        let d = -model.inviscid_flux_derivative(nb.w) / (2.0 * grid.hx())
            + (dmu_w * (nb.c - nb.w) - mu_w) / hx2;
        out.push((col, tau * d));
    }
    out.push((row, 1.0 + tau * d_center));
    if let Some(col) = nb.east {
        let d = model.inviscid_flux_derivative(nb.e) / (2.0 * grid.hx())
            - (dmu_e * (nb.e - nb.c) + mu_e) / hx2;
        out.push((col, tau * d));
    }
    if let Some(col) = nb.north {
        let d = model.inviscid_flux_derivative(nb.n) / (2.0 * grid.hy())
            - (dmu_n * (nb.n - nb.c) + mu_n) / hy2;
        out.push((col, tau * d));
    }
}

/// Assembles the pentadiagonal Newton block `A = I + tau dF/du` at state `u`.
pub fn assemble_jacobian(
    grid: &SpaceTimeGrid,
    model: &ModelSpec,
    u: &[f64],
    t: f64,
) -> BandedMatrix {
    assert_eq!(u.len(), grid.unknowns(), "field length mismatch");
    let mut a = BandedMatrix::new(grid.unknowns(), jacobian_offsets(grid));
    let mut buf = Vec::with_capacity(5);
    for row in 0..grid.unknowns() {
        jacobian_row(grid, model, u, t, row, &mut buf);
        for &(col, val) in buf.iter() {
            a.set(row, col, val);
        }
    }
    a
}
