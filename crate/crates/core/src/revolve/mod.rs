//! Reference computations on surfaces of revolution about the x axis.
//!
//! A profile `R(x) > 0`, periodic on `[-1,1]`, sweeps the tube
//! `r(x,θ) = (x, R cos θ, R sin θ)` which closes into a torus in the cell.
//! Two independent oracles live here:
//!
//! - [`adc_axial_analytic`]: the closed form
//!   `k_A(e1) = 4 / (∫ W/R dx · ∫ R W dx)` with `W = √(1+R'²)`, by
//!   adaptive quadrature;
//! - [`shell::effective_conductivity_shell`]: a finite-difference
//!   minimization of the thickened-shell cell problem at finite `ε`.
//!
//! [`revolve_mesh`] triangulates the same surface for the discrete evaluator.

pub mod expr;
pub mod quadrature;
pub mod shell;

use std::f64::consts::PI;

pub use expr::{Expr, ExprError};
pub use shell::{effective_conductivity_shell, ShellGrid, ShellResult};

use crate::mesh::PeriodicSurfaceMesh;
use crate::{Error, Result};

const PERIODIC_TOL: f64 = 1e-12;
const POSITIVITY_SAMPLES: usize = 2001;

/// Radius profile with symbolic first and second derivatives.
#[derive(Debug, Clone)]
pub struct RevolutionProfile {
    source: String,
    radius: Expr,
    slope: Expr,
    curvature: Expr,
}

impl RevolutionProfile {
    pub fn parse(source: &str) -> Result<Self> {
        let radius = Expr::parse(source)?;
        Self::from_expr(radius, source.to_string())
    }

    pub fn constant(r: f64) -> Result<Self> {
        Self::from_expr(Expr::Const(r), format!("{r}"))
    }

    fn from_expr(radius: Expr, source: String) -> Result<Self> {
        let slope = radius.derivative(0);
        let curvature = slope.derivative(0);
        let p = Self { source, radius, slope, curvature };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        let (r0, r1) = (self.r(-1.0), self.r(1.0));
        let (d0, d1) = (self.dr(-1.0), self.dr(1.0));
        if (r0 - r1).abs() > PERIODIC_TOL || (d0 - d1).abs() > PERIODIC_TOL {
            return Err(Error::invalid(format!(
                "profile '{}' is not periodic: R(±1) = {r0}, {r1}; R'(±1) = {d0}, {d1}",
                self.source
            )));
        }
        for i in 0..POSITIVITY_SAMPLES {
            let x = -1.0 + 2.0 * i as f64 / (POSITIVITY_SAMPLES - 1) as f64;
            let r = self.r(x);
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::invalid(format!("profile '{}' is not positive at x = {x}: {r}", self.source)));
            }
        }
        Ok(())
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn r(&self, x: f64) -> f64 {
        self.radius.eval_x(x)
    }

    pub fn dr(&self, x: f64) -> f64 {
        self.slope.eval_x(x)
    }

    pub fn d2r(&self, x: f64) -> f64 {
        self.curvature.eval_x(x)
    }

    /// Arc-length factor `√(1 + R'²)`.
    pub fn stretch(&self, x: f64) -> f64 {
        self.dr(x).hypot(1.0)
    }

    /// Area of the swept surface, `2π ∫ R W dx`.
    pub fn area(&self, tol: f64) -> Result<f64> {
        Ok(2.0 * PI * quadrature::integrate(|x| self.r(x) * self.stretch(x), -1.0, 1.0, tol)?)
    }

    /// Largest absolute principal curvature, sampled densely.
    pub fn max_curvature(&self, samples: usize) -> f64 {
        (0..samples)
            .map(|i| {
                let x = -1.0 + 2.0 * i as f64 / samples as f64;
                let w = self.stretch(x);
                let meridian = self.d2r(x).abs() / w.powi(3);
                let parallel = 1.0 / (self.r(x) * w);
                meridian.max(parallel)
            })
            .fold(0.0, f64::max)
    }
}

/// Closed-form axial ADC of the revolution surface (unit base conductivity).
pub fn adc_axial_analytic(profile: &RevolutionProfile, tol: f64) -> Result<f64> {
    let inv = quadrature::integrate(|x| profile.stretch(x) / profile.r(x), -1.0, 1.0, tol)?;
    let direct = quadrature::integrate(|x| profile.r(x) * profile.stretch(x), -1.0, 1.0, tol)?;
    Ok(4.0 / (inv * direct))
}

/// Structured triangulation of the revolution surface with `nx` axial and
/// `ntheta` angular divisions.
pub fn revolve_mesh(profile: &RevolutionProfile, nx: usize, ntheta: usize) -> Result<PeriodicSurfaceMesh> {
    crate::surfgen::revolution(|x| profile.r(x), nx, ntheta)
}
