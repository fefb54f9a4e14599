//! Benchmark PDE models: inviscid flux and viscosity laws with their
//! derivatives, plus the closed-form exact solutions that supply Dirichlet
//! data, initial data, and the error reference.
//!
//! Both built-in models are instances of the scalar conservation law
//! `u_t + f(u)_x + f(u)_y = (mu(u) u_x)_x + (mu(u) u_y)_y` with identical
//! fluxes in the two coordinate directions, so one flux function serves both.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Rectangular spatial domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Domain {
    pub fn square(min: f64, max: f64) -> Self {
        Domain {
            x_min: min,
            x_max: max,
            y_min: min,
            y_max: max,
        }
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type FieldFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// User-supplied model hook for tests: arbitrary flux/viscosity laws and a
/// reference solution that provides boundary and initial data.
#[derive(Clone)]
pub struct CustomModel {
    pub flux: ScalarFn,
    pub flux_derivative: ScalarFn,
    pub viscosity: ScalarFn,
    pub viscosity_derivative: ScalarFn,
    pub exact: FieldFn,
}

impl fmt::Debug for CustomModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomModel { .. }")
    }
}

#[derive(Debug, Clone)]
pub enum ModelKind {
    /// `u_t = div(mu0 u^2 grad u)` with exact solution
    /// `sqrt(sqrt(alpha/mu0)(x+y) + alpha t + 1)`.
    NonlinearHeat { mu0: f64, alpha: f64 },
    /// `u_t + (u^2/2)_x + (u^2/2)_y = mu0 lap(u)` with the traveling viscous
    /// front `v/2 (1 - tanh(v(x+y-vt)/(4 mu0)))`.
    ViscousBurgers { mu0: f64, shock_speed: f64 },
    Custom(CustomModel),
}

#[derive(Debug, Clone)]
pub struct ModelSpec {
    kind: ModelKind,
    domain: Domain,
    t_final: f64,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, domain: Domain, t_final: f64) -> Result<Self> {
        let domain_ordered = domain.x_min < domain.x_max && domain.y_min < domain.y_max;
        if !domain_ordered {
            return Err(Error::InvalidModel(format!(
                "degenerate domain [{}, {}] x [{}, {}]",
                domain.x_min, domain.x_max, domain.y_min, domain.y_max
            )));
        }
        let t_final_ok = t_final > 0.0;
        if !t_final_ok {
            return Err(Error::InvalidModel(format!(
                "t_final must be positive, got {t_final}"
            )));
        }
        match &kind {
            ModelKind::NonlinearHeat { mu0, alpha } => {
                let mu0_ok = *mu0 > 0.0;
                if !mu0_ok {
                    return Err(Error::InvalidModel(format!(
                        "nonlinear heat needs mu0 > 0, got {mu0}"
                    )));
                }
                let alpha_ok = *alpha > 0.0;
                if !alpha_ok {
                    return Err(Error::InvalidModel(format!(
                        "nonlinear heat needs alpha > 0, got {alpha}"
                    )));
                }
            }
            ModelKind::ViscousBurgers { mu0, .. } => {
                let mu0_ok = *mu0 > 0.0;
                if !mu0_ok {
                    return Err(Error::InvalidModel(format!(
                        "viscous front needs mu0 > 0, got {mu0}"
                    )));
                }
            }
            ModelKind::Custom(_) => {}
        }
        let spec = ModelSpec {
            kind,
            domain,
            t_final,
        };
        // The heat square root must stay real over the whole space-time box;
        // the radicand is linear in (x, y, t), so the corners decide.
        if matches!(spec.kind, ModelKind::NonlinearHeat { .. }) {
            for &x in &[domain.x_min, domain.x_max] {
                for &y in &[domain.y_min, domain.y_max] {
                    for &t in &[0.0, t_final] {
                        spec.exact_solution(x, y, t)?;
                    }
                }
            }
        }
        Ok(spec)
    }

    pub fn nonlinear_heat(mu0: f64, alpha: f64, domain: Domain, t_final: f64) -> Result<Self> {
        Self::new(ModelKind::NonlinearHeat { mu0, alpha }, domain, t_final)
    }

    pub fn viscous_burgers(
        mu0: f64,
        shock_speed: f64,
        domain: Domain,
        t_final: f64,
    ) -> Result<Self> {
        Self::new(ModelKind::ViscousBurgers { mu0, shock_speed }, domain, t_final)
    }

    pub fn custom(model: CustomModel, domain: Domain, t_final: f64) -> Result<Self> {
        Self::new(ModelKind::Custom(model), domain, t_final)
    }

    /// The nonlinear heat benchmark setup: `mu0 = 1e-6`, `alpha = 1` on
    /// `[0.1, 1.1]^2`, `t in [0, 1]`.
    pub fn heat_benchmark() -> Self {
        Self::nonlinear_heat(1e-6, 1.0, Domain::square(0.1, 1.1), 1.0)
            .expect("benchmark constants are valid")
    }

    /// The viscous-front benchmark setup: `mu0 = 1e-3`, `v = 0.5` on
    /// `[-0.25, 0.75]^2`, `t in [0, 1]`, so the front crosses the domain
    /// center at the final time.
    pub fn burgers_benchmark() -> Self {
        Self::viscous_burgers(1e-3, 0.5, Domain::square(-0.25, 0.75), 1.0)
            .expect("benchmark constants are valid")
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    /// Inviscid flux, identical in both coordinate directions.
    #[inline]
    pub fn inviscid_flux(&self, u: f64) -> f64 {
        match &self.kind {
            ModelKind::NonlinearHeat { .. } => 0.0,
            ModelKind::ViscousBurgers { .. } => 0.5 * u * u,
            ModelKind::Custom(c) => (c.flux)(u),
        }
    }

    #[inline]
    pub fn inviscid_flux_derivative(&self, u: f64) -> f64 {
        match &self.kind {
            ModelKind::NonlinearHeat { .. } => 0.0,
            ModelKind::ViscousBurgers { .. } => u,
            ModelKind::Custom(c) => (c.flux_derivative)(u),
        }
    }

    #[inline]
    pub fn viscosity(&self, u: f64) -> f64 {
        match &self.kind {
            ModelKind::NonlinearHeat { mu0, .. } => mu0 * u * u,
            ModelKind::ViscousBurgers { mu0, .. } => *mu0,
            ModelKind::Custom(c) => (c.viscosity)(u),
        }
    }

    #[inline]
    pub fn viscosity_derivative(&self, u: f64) -> f64 {
        match &self.kind {
            ModelKind::NonlinearHeat { mu0, .. } => 2.0 * mu0 * u,
            ModelKind::ViscousBurgers { .. } => 0.0,
            ModelKind::Custom(c) => (c.viscosity_derivative)(u),
        }
    }

    /// Closed-form exact value; supplies the initial condition (t = 0), the
    /// Dirichlet boundary data, and the error reference.
    pub fn exact_solution(&self, x: f64, y: f64, t: f64) -> Result<f64> {
        match &self.kind {
            ModelKind::NonlinearHeat { mu0, alpha } => {
                let radicand = (alpha / mu0).sqrt() * (x + y) + alpha * t + 1.0;
                if radicand <= 0.0 {
                    return Err(Error::ExactSolutionDomain { x, y, t, radicand });
                }
                Ok(radicand.sqrt())
            }
            ModelKind::ViscousBurgers { mu0, shock_speed } => {
                let v = *shock_speed;
                Ok(0.5 * v * (1.0 - (v * (x + y - v * t) / (4.0 * mu0)).tanh()))
            }
            ModelKind::Custom(c) => Ok((c.exact)(x, y, t)),
        }
    }

    /// Dirichlet/initial data lookup for points inside the validated
    /// space-time box.
    #[inline]
    pub fn boundary_value(&self, x: f64, y: f64, t: f64) -> f64 {
        self.exact_solution(x, y, t)
            .expect("boundary data requested outside the validated domain")
    }
}
