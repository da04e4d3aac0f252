//! Convergence studies and log-log slope fits.
//!
//! - h-convergence: discrete axial ADC on refined tubes of revolution against
//!   the closed form, with `h` the mean face circumradius;
//! - ε-order: the residual `|κ_ε - ρ_ε κ_A|` of the thickened shell against
//!   the half-thickness `ε`;
//! - preconditioner sweep: optimization runs from one input at several
//!   screening strengths.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adc::adc_matrix;
use crate::mesh::{build_geometry, GeometryOptions, PeriodicSurfaceMesh};
use crate::optimize::{optimize, IterationRecord, ObjectiveSpec, OptConfig, StopReason};
use crate::revolve::{adc_axial_analytic, effective_conductivity_shell, revolve_mesh, RevolutionProfile, ShellGrid};
use crate::{Error, Result};

/// Quadrature tolerance for the closed-form reference.
pub const REFERENCE_TOL: f64 = 1e-12;

/// One row of a convergence study: `(h or ε, value, reference, error)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub param: f64,
    pub value: f64,
    pub reference: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub rows: Vec<StudyRow>,
    /// Least-squares slope of `log error` against `log param`.
    pub slope: f64,
}

impl Study {
    fn from_rows(mut rows: Vec<StudyRow>) -> Result<Self> {
        rows.sort_by(|a, b| a.param.total_cmp(&b.param));
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.param, r.error)).collect();
        let slope = loglog_slope(&pts)?;
        Ok(Self { rows, slope })
    }
}

/// Least-squares slope through `(log x, log y)` using every point.
pub fn loglog_slope(pts: &[(f64, f64)]) -> Result<f64> {
    if pts.len() < 3 {
        return Err(Error::invalid(format!("a slope fit needs at least 3 points, got {}", pts.len())));
    }
    if pts.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(Error::invalid("log-log fit needs positive finite values"));
    }
    let logs: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    crate::optimize::least_squares_slope(&logs).ok_or_else(|| Error::invalid("all abscissae are equal"))
}

/// Relative error of the discrete `k_A^{11}` on `revolve_mesh(n, n)` for each
/// `n`, against the closed form.
pub fn h_convergence(profile: &RevolutionProfile, resolutions: &[usize], kappa: f64) -> Result<Study> {
    let reference = kappa * adc_axial_analytic(profile, REFERENCE_TOL)?;
    let rows = resolutions
        .par_iter()
        .map(|&n| {
            let mesh = revolve_mesh(profile, n, n)?;
            let cache = build_geometry(&mesh, GeometryOptions::default())?;
            let value = adc_matrix(&mesh, &cache, kappa)?.ka[(0, 0)];
            let h = cache.mean_circumradius(&mesh);
            Ok(StudyRow { param: h, value, reference, error: (value - reference).abs() / reference })
        })
        .collect::<Result<Vec<_>>>()?;
    Study::from_rows(rows)
}

/// Shell residual `|κ_ε - ρ_ε κ_A|` for each half-thickness.
pub fn eps_order(profile: &RevolutionProfile, epsilons: &[f64], n: usize, m: usize, kappa: f64) -> Result<Study> {
    let adc = kappa * adc_axial_analytic(profile, REFERENCE_TOL)?;
    let rows = epsilons
        .par_iter()
        .map(|&eps| {
            let shell = effective_conductivity_shell(profile, &ShellGrid::new(eps, n, m)?, kappa)?;
            let reference = shell.rho_eps * adc;
            Ok(StudyRow { param: eps, value: shell.kappa_eps, reference, error: (shell.kappa_eps - reference).abs() })
        })
        .collect::<Result<Vec<_>>>()?;
    Study::from_rows(rows)
}

/// Relative change of `κ_ε` when both grid counts are doubled.
pub fn grid_stability(profile: &RevolutionProfile, eps: f64, n: usize, m: usize, kappa: f64) -> Result<f64> {
    let grids = [ShellGrid::new(eps, n, m)?, ShellGrid::new(eps, 2 * n, 2 * m)?];
    let k: Vec<f64> = grids
        .par_iter()
        .map(|g| effective_conductivity_shell(profile, g, kappa).map(|r| r.kappa_eps))
        .collect::<Result<_>>()?;
    Ok((k[1] - k[0]).abs() / k[1].abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PreconRun {
    pub c: f64,
    pub stop: StopReason,
    pub final_objective: f64,
    pub flow_time: f64,
    /// First iteration whose accepted objective covers 99% of the run's
    /// total improvement.
    pub iterations_to_99: Option<usize>,
    pub records: Vec<IterationRecord>,
}

/// First iteration at which `fraction` of the total improvement is reached.
pub fn iterations_to_fraction(records: &[IterationRecord], fraction: f64) -> Option<usize> {
    let start = records.first()?.objective;
    let end = records.last()?.accepted_objective;
    let goal = start + fraction * (end - start);
    let up = end >= start;
    records
        .iter()
        .position(|r| if up { r.accepted_objective >= goal } else { r.accepted_objective <= goal })
        .map(|i| i + 1)
}

/// Runs the optimizer from the same mesh once per screening strength.
pub fn precon_sweep(
    mesh: &PeriodicSurfaceMesh,
    spec: &ObjectiveSpec,
    base: &OptConfig,
    strengths: &[f64],
) -> Result<Vec<PreconRun>> {
    let mut runs = strengths
        .par_iter()
        .map(|&c| {
            let cfg = OptConfig { precondition_strength: c, ..base.clone() };
            let out = optimize(mesh, spec, &cfg)?;
            let last = out.records.last().ok_or_else(|| Error::invalid("optimizer produced no iterations"))?;
            Ok(PreconRun {
                c,
                stop: out.stop.clone(),
                final_objective: last.accepted_objective,
                flow_time: last.flow_time,
                iterations_to_99: iterations_to_fraction(&out.records, 0.99),
                records: out.records,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    runs.sort_by(|a, b| a.c.total_cmp(&b.c));
    Ok(runs)
}
