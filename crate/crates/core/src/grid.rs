//! Space-time grid bookkeeping: uniform rectangular spatial grid with
//! eliminated Dirichlet boundary nodes, uniform time partition, and the
//! field containers used across the solvers.

use crate::error::{Error, Result};
use crate::model::ModelSpec;

/// One time level of unknowns, row-major along x over the interior nodes.
pub type GridField = Vec<f64>;

/// Uniform rectangular grid with `nx`/`ny` intervals per direction and `nt`
/// uniform time steps. Unknowns live at the `(nx-1)(ny-1)` interior nodes;
/// boundary nodes carry Dirichlet data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceTimeGrid {
    nx: usize,
    ny: usize,
    nt: usize,
    hx: f64,
    hy: f64,
    tau: f64,
    x_min: f64,
    y_min: f64,
    ns: usize,
}

impl SpaceTimeGrid {
    pub fn new(model: &ModelSpec, nx: usize, ny: usize, nt: usize) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 intervals per direction, got {nx} x {ny}"
            )));
        }
        if nt < 1 {
            return Err(Error::InvalidGrid("need at least 1 time step".into()));
        }
        let d = model.domain();
        Ok(SpaceTimeGrid {
            nx,
            ny,
            nt,
            hx: (d.x_max - d.x_min) / nx as f64,
            hy: (d.y_max - d.y_min) / ny as f64,
            tau: model.t_final() / nt as f64,
            x_min: d.x_min,
            y_min: d.y_min,
            ns: (nx - 1) * (ny - 1),
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn hx(&self) -> f64 {
        self.hx
    }

    pub fn hy(&self) -> f64 {
        self.hy
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Interior unknown count `(nx-1)(ny-1)`.
    pub fn unknowns(&self) -> usize {
        self.ns
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.hx
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        self.y_min + j as f64 * self.hy
    }

    /// Time of level `n`, `n = 0..=nt`.
    #[inline]
    pub fn t(&self, n: usize) -> f64 {
        n as f64 * self.tau
    }

    /// Linear index of interior node `(i, j)`, `i = 1..nx-1`, `j = 1..ny-1`,
    /// row-major along x.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!((1..self.nx).contains(&i) && (1..self.ny).contains(&j));
        (j - 1) * (self.nx - 1) + (i - 1)
    }

    /// Inverse of [`index`](Self::index): interior coordinates `(i, j)`.
    #[inline]
    pub fn node(&self, index: usize) -> (usize, usize) {
        let b = self.nx - 1;
        (index % b + 1, index / b + 1)
    }

    /// Samples `model`'s exact solution at every interior node.
    pub fn sampled_exact(&self, model: &ModelSpec, t: f64) -> GridField {
        let mut out = vec![0.0; self.ns];
        for j in 1..self.ny {
            for i in 1..self.nx {
                out[self.index(i, j)] = model.boundary_value(self.x(i), self.y(j), t);
            }
        }
        out
    }

    /// Initial condition `u(x, y, 0)` on the interior nodes.
    pub fn initial_condition(&self, model: &ModelSpec) -> GridField {
        self.sampled_exact(model, 0.0)
    }

    /// Grid coarsened by `factor` in both spatial directions and in time.
    pub fn coarsened(&self, model: &ModelSpec, factor: usize) -> Result<Self> {
        if factor < 2 {
            return Err(Error::InvalidGrid(format!(
                "coarsening factor must be at least 2, got {factor}"
            )));
        }
        if !(self.nx.is_multiple_of(factor)
            && self.ny.is_multiple_of(factor)
            && self.nt.is_multiple_of(factor))
        {
            return Err(Error::InvalidGrid(format!(
                "coarsening factor {factor} does not divide grid {} x {} x {}",
                self.nt, self.nx, self.ny
            )));
        }
        SpaceTimeGrid::new(model, self.nx / factor, self.ny / factor, self.nt / factor)
    }
}

/// Solution values over all computed time levels `n = 1..=nt`; the initial
/// condition is not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalField {
    levels: Vec<GridField>,
}

impl GlobalField {
    pub fn new(levels: Vec<GridField>) -> Self {
        debug_assert!(levels.windows(2).all(|w| w[0].len() == w[1].len()));
        GlobalField { levels }
    }

    /// Number of stored time levels.
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn levels(&self) -> &[GridField] {
        &self.levels
    }

    /// Values at time level `n`, 1-based.
    pub fn level(&self, n: usize) -> &[f64] {
        &self.levels[n - 1]
    }

    pub fn into_levels(self) -> Vec<GridField> {
        self.levels
    }

    /// Largest pointwise difference over all levels.
    pub fn max_abs_diff(&self, other: &GlobalField) -> f64 {
        assert_eq!(self.levels.len(), other.levels.len());
        self.levels
            .iter()
            .zip(&other.levels)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    /// True when every value in both fields is bitwise identical.
    pub fn bitwise_eq(&self, other: &GlobalField) -> bool {
        self.levels.len() == other.levels.len()
            && self
                .levels
                .iter()
                .zip(&other.levels)
                .all(|(a, b)| {
                    a.len() == b.len()
                        && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
                })
    }
}
