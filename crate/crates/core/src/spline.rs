//! Natural cubic spline interpolation in one dimension.

use crate::band::{band_lu_solve, BandedMatrix};
use crate::error::{Error, Result};

/// Queries may overshoot the knot range by this relative slack (floating-point
/// noise from differently-computed grid endpoints) and are clamped.
const RANGE_SLACK: f64 = 1e-9;

/// Natural cubic spline through strictly increasing knots: interpolates the
/// knot values exactly and has zero second derivative at both ends.
#[derive(Debug, Clone)]
pub struct NaturalCubicSpline {
    x: Vec<f64>,
    f: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl NaturalCubicSpline {
    pub fn fit(knots_x: &[f64], knots_f: &[f64]) -> Result<Self> {
        assert_eq!(knots_x.len(), knots_f.len(), "knot arrays differ in length");
        let n = knots_x.len();
        if n < 3 {
            return Err(Error::InvalidConfig(format!(
                "cubic spline needs at least 3 knots, got {n}"
            )));
        }
        for i in 1..n {
            if knots_x[i] <= knots_x[i - 1] {
                return Err(Error::NonMonotoneKnots { index: i });
            }
        }

        // Tridiagonal moment system for interior second derivatives,
        // with natural end conditions m[0] = m[n-1] = 0.
        let interior = n - 2;
        let offsets = if interior == 1 { vec![0] } else { vec![-1, 0, 1] };
        let mut sys = BandedMatrix::new(interior, offsets);
        let mut rhs = vec![0.0; interior];
        let h = |i: usize| knots_x[i + 1] - knots_x[i];
        for (r, rhs_r) in rhs.iter_mut().enumerate() {
            let i = r + 1;
            sys.set(r, r, (h(i - 1) + h(i)) / 3.0);
            if r > 0 {
                sys.set(r, r - 1, h(i - 1) / 6.0);
            }
            if r + 1 < interior {
                sys.set(r, r + 1, h(i) / 6.0);
            }
            *rhs_r = (knots_f[i + 1] - knots_f[i]) / h(i) - (knots_f[i] - knots_f[i - 1]) / h(i - 1);
        }
        let sol = band_lu_solve(&sys, &rhs, None)?;
        let mut m = vec![0.0; n];
        m[1..=interior].copy_from_slice(&sol);

        Ok(NaturalCubicSpline {
            x: knots_x.to_vec(),
            f: knots_f.to_vec(),
            m,
        })
    }

    pub fn eval(&self, q: f64) -> Result<f64> {
        let lo = self.x[0];
        let hi = *self.x.last().unwrap();
        let slack = RANGE_SLACK * (hi - lo).abs();
        if q < lo - slack || q > hi + slack {
            return Err(Error::QueryOutOfRange { value: q, lo, hi });
        }
        let q = q.clamp(lo, hi);
        // Interval containing q: x[i] <= q <= x[i+1].
        let i = match self.x.partition_point(|&xk| xk <= q) {
            0 => 0,
            p if p >= self.x.len() => self.x.len() - 2,
            p => p - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let a = self.x[i + 1] - q;
        let b = q - self.x[i];
        Ok(self.m[i] * a * a * a / (6.0 * h)
            + self.m[i + 1] * b * b * b / (6.0 * h)
            + (self.f[i] / h - self.m[i] * h / 6.0) * a
            + (self.f[i + 1] / h - self.m[i + 1] * h / 6.0) * b)
    }
}

/// Fits a natural cubic spline and evaluates it at every query point.
pub fn cubic_spline_interpolate_1d(
    knots_x: &[f64],
    knots_f: &[f64],
    queries: &[f64],
) -> Result<Vec<f64>> {
    let spline = NaturalCubicSpline::fit(knots_x, knots_f)?;
    queries.iter().map(|&q| spline.eval(q)).collect()
}
