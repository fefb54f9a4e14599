//! Space-time error norms against the exact solution and the refinement-rate
//! formula.

use paradin_core::{GlobalField, ModelSpec, SpaceTimeGrid};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    L1,
    L2,
    Linf,
}

impl NormKind {
    pub fn label(&self) -> &'static str {
        match self {
            NormKind::L1 => "l1",
            NormKind::L2 => "l2",
            NormKind::Linf => "linf",
        }
    }
}

impl std::str::FromStr for NormKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(NormKind::L1),
            "l2" => Ok(NormKind::L2),
            "linf" | "max" => Ok(NormKind::Linf),
            other => Err(format!("unknown norm '{other}' (expected l1, l2, or linf)")),
        }
    }
}

/// Error of a computed field against the exact solution over all unknown
/// nodes and computed time levels: `L1` and `L2` average over the
/// `nt * ns` samples, `Linf` is the plain maximum.
pub fn space_time_error(
    field: &GlobalField,
    model: &ModelSpec,
    grid: &SpaceTimeGrid,
    norm: NormKind,
) -> f64 {
    assert_eq!(field.len(), grid.nt(), "field does not cover the time grid");
    let samples = (grid.nt() * grid.unknowns()) as f64;
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    let mut max = 0.0f64;
    for n in 1..=grid.nt() {
        let level = field.level(n);
        let t = grid.t(n);
        for j in 1..grid.ny() {
            for i in 1..grid.nx() {
                let e = level[grid.index(i, j)] - model.boundary_value(grid.x(i), grid.y(j), t);
                abs_sum += e.abs();
                sq_sum += e * e;
                max = max.max(e.abs());
            }
        }
    }
    match norm {
        NormKind::L1 => abs_sum / samples,
        NormKind::L2 => (sq_sum / samples).sqrt(),
        NormKind::Linf => max,
    }
}

/// Observed refinement rate `log(e_coarse/e_fine) / log(n_fine/n_coarse)`,
/// valid for non-doubling grid sequences.
pub fn convergence_rate(e_coarse: f64, e_fine: f64, n_coarse: usize, n_fine: usize) -> f64 {
    assert!(e_coarse > 0.0 && e_fine > 0.0, "errors must be positive");
    assert!(n_fine > n_coarse, "refinement must increase the grid label");
    (e_coarse / e_fine).ln() / (n_fine as f64 / n_coarse as f64).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use paradin_core::{CustomModel, Domain};
    use std::sync::Arc;

    fn offset_model(offset: f64) -> ModelSpec {
        ModelSpec::custom(
            CustomModel {
                flux: Arc::new(|_| 0.0),
                flux_derivative: Arc::new(|_| 0.0),
                viscosity: Arc::new(|_| 0.0),
                viscosity_derivative: Arc::new(|_| 0.0),
                exact: Arc::new(move |_, _, _| offset),
            },
            Domain::square(0.0, 1.0),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn unit_error_gives_unit_norms() {
        let model = offset_model(0.0);
        let grid = SpaceTimeGrid::new(&model, 5, 5, 3).unwrap();
        let ones = GlobalField::new(vec![vec![1.0; grid.unknowns()]; 3]);
        assert_eq!(space_time_error(&ones, &model, &grid, NormKind::L1), 1.0);
        assert_eq!(space_time_error(&ones, &model, &grid, NormKind::L2), 1.0);
        assert_eq!(space_time_error(&ones, &model, &grid, NormKind::Linf), 1.0);
    }

    #[test]
    fn l2_matches_a_direct_elementwise_loop() {
        let model = offset_model(0.25);
        let grid = SpaceTimeGrid::new(&model, 4, 6, 2).unwrap();
        let mut levels = Vec::new();
        for n in 0..2usize {
            levels.push(
                (0..grid.unknowns())
                    .map(|k| 0.25 + ((k + n) as f64 * 0.37).sin() * 1e-3)
                    .collect(),
            );
        }
        let field = GlobalField::new(levels.clone());
        // Independent brute-force accumulation.
        let mut sq = 0.0;
        let mut count = 0usize;
        for lvl in &levels {
            for &v in lvl.iter() {
                let e: f64 = v - 0.25;
                sq += e * e;
                count += 1;
            }
        }
        let want = (sq / count as f64).sqrt();
        let got = space_time_error(&field, &model, &grid, NormKind::L2);
        assert!((got - want).abs() <= 1e-15);
    }

    #[test]
    fn rate_formula_reference_values() {
        let r = convergence_rate(2.87e-2, 1.56e-2, 6, 12);
        assert!((r - 0.88).abs() <= 0.01, "rate {r}");
        let r = convergence_rate(1.56e-2, 1.05e-2, 12, 18);
        assert!((r - 0.97).abs() <= 0.01, "rate {r}");
        assert_eq!(convergence_rate(1e-3, 1e-3, 8, 16), 0.0);
    }
}
