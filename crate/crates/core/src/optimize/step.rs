//! Screened preconditioning and the backtracking line search.

use serde::{Deserialize, Serialize};

use super::objective::{ObjectiveSpec, Sense};
use crate::adc::adc_matrix;
use crate::linalg::{add_scaled, matvec, SolveError, SpdSolver};
use crate::mesh::{build_geometry, GeometryCache, GeometryOptions, PeriodicSurfaceMesh, Vec3};
use crate::{Error, Result};

const PRECONDITION_RESIDUAL: f64 = 1e-10;

/// Solves `(M + c S) d = (c + 1) g`.
pub fn precondition(cache: &GeometryCache, g: &[f64], c: f64) -> Result<Vec<f64>> {
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::invalid(format!("precondition strength must be non-negative, got {c}")));
    }
    let mass = cache.mass_diagonal();
    let rhs: Vec<f64> = g.iter().map(|x| (c + 1.0) * x).collect();
    if c == 0.0 {
        return Ok(rhs.iter().zip(mass).map(|(r, m)| r / m).collect());
    }
    let system = add_scaled(&cache.mass_matrix(), c, &cache.stiffness)?;
    let solver = SpdSolver::new(&system)?;
    let mut d = solver.solve(&rhs);
    let bnorm = norm(&rhs);
    if bnorm == 0.0 {
        return Ok(d);
    }
    for _ in 0..3 {
        let r: Vec<f64> = rhs.iter().zip(matvec(&system, &d)).map(|(b, a)| b - a).collect();
        let rel = norm(&r) / bnorm;
        if rel <= PRECONDITION_RESIDUAL * 1e-3 {
            break;
        }
        for (di, ci) in d.iter_mut().zip(solver.solve(&r)) {
            *di += ci;
        }
    }
    let r: Vec<f64> = rhs.iter().zip(matvec(&system, &d)).map(|(b, a)| b - a).collect();
    let rel = norm(&r) / bnorm;
    if rel > PRECONDITION_RESIDUAL {
        return Err(SolveError::NotConverged(rel).into());
    }
    Ok(d)
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ArmijoConfig {
    pub initial_step: f64,
    pub shrink_factor: f64,
    pub slope_fraction: f64,
    pub min_step: f64,
}

impl Default for ArmijoConfig {
    fn default() -> Self {
        Self { initial_step: 1.0, shrink_factor: 0.5, slope_fraction: 1e-4, min_step: 1e-4 }
    }
}

impl ArmijoConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.initial_step > 0.0
            && self.shrink_factor > 0.0
            && self.shrink_factor < 1.0
            && self.slope_fraction > 0.0
            && self.min_step > 0.0
            && self.min_step <= self.initial_step;
        if !ok {
            return Err(Error::invalid(format!("invalid line search settings {self:?}")));
        }
        Ok(())
    }
}

/// Outcome of a backtracking search on a scalar function of the step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backtrack {
    pub step: f64,
    /// Objective at the accepted step, or `None` when every trial failed.
    pub value: Option<f64>,
    pub trials: usize,
}

impl Backtrack {
    pub fn accepted(&self) -> bool {
        self.value.is_some()
    }
}

/// Tries `t = initial·shrink^m` until `sense·(f(t) - f0) ≥ σ t slope`, with
/// `slope ≥ 0` the predicted rate of improvement. Gives up once `t` falls
/// below `min_step`, returning the last step tried.
pub fn backtrack(
    f0: f64,
    slope: f64,
    sense: Sense,
    cfg: &ArmijoConfig,
    mut eval: impl FnMut(f64) -> Option<f64>,
) -> Backtrack {
    let mut t = cfg.initial_step;
    let mut trials = 0;
    loop {
        trials += 1;
        if let Some(f) = eval(t) {
            if f.is_finite() && sense.sign() * (f - f0) >= cfg.slope_fraction * t * slope {
                return Backtrack { step: t, value: Some(f), trials };
            }
        }
        let next = t * cfg.shrink_factor;
        if next < cfg.min_step {
            return Backtrack { step: next, value: None, trials };
        }
        t = next;
    }
}

/// `(-S) x`: the cotangent Laplacian of the vertex positions.
pub fn position_laplacian(cache: &GeometryCache) -> Vec<Vec3> {
    let mut out = vec![Vec3::zeros(); cache.num_vertices()];
    for ((edge, w), e) in cache.topology.edges.iter().zip(&cache.edge_weight).zip(&cache.edge_vector) {
        out[edge.v[0]] += e * *w;
        out[edge.v[1]] -= e * *w;
    }
    out
}

/// Vertex displacement for step `t`: `t·s·d_i n_i + t·w·(-S x)_i`, where
/// `s` turns ascent directions into descent ones when minimizing.
pub fn step_displacement(cache: &GeometryCache, d: &[f64], sense: Sense, fairing: f64, t: f64) -> Vec<Vec3> {
    let lap = position_laplacian(cache);
    cache
        .vertex_normal
        .iter()
        .zip(d)
        .zip(&lap)
        .map(|((n, di), l)| n * (t * sense.sign() * di) + l * (t * fairing))
        .collect()
}

/// Objective of a mesh, or `None` if the geometry or solves fail.
pub fn evaluate_objective(mesh: &PeriodicSurfaceMesh, spec: &ObjectiveSpec, kappa: f64) -> Option<f64> {
    mesh.validate().ok()?;
    let cache = build_geometry(mesh, GeometryOptions::default()).ok()?;
    let adc = adc_matrix(mesh, &cache, kappa).ok()?;
    Some(spec.value(&adc.ka))
}

#[derive(Debug, Clone)]
pub struct LineSearch {
    pub step: f64,
    pub mesh: PeriodicSurfaceMesh,
    pub value: f64,
    pub accepted: bool,
    pub trials: usize,
}

/// Armijo search along the preconditioned normal direction `d`.
///
/// Trials that flip a face against its current orientation, or whose
/// objective cannot be evaluated, are rejected. When no step is accepted the
/// mesh is returned unchanged with the last step tried.
#[allow(clippy::too_many_arguments)]
pub fn armijo_step(
    mesh: &PeriodicSurfaceMesh,
    cache: &GeometryCache,
    spec: &ObjectiveSpec,
    d: &[f64],
    f0: f64,
    g: &[f64],
    fairing: f64,
    kappa: f64,
    cfg: &ArmijoConfig,
) -> LineSearch {
    if d.iter().all(|&x| x == 0.0) {
        return LineSearch { step: cfg.initial_step, mesh: mesh.clone(), value: f0, accepted: true, trials: 0 };
    }
    let slope: f64 = g.iter().zip(d).map(|(a, b)| a * b).sum();
    let unit = step_displacement(cache, d, spec.sense, fairing, 1.0);
    let mut best: Option<PeriodicSurfaceMesh> = None;
    let result = backtrack(f0, slope, spec.sense, cfg, |t| {
        let delta: Vec<Vec3> = unit.iter().map(|u| u * t).collect();
        let mut trial = mesh.clone();
        trial.displace(&delta);
        if flips_faces(mesh, cache, &trial) {
            return None;
        }
        let value = evaluate_objective(&trial, spec, kappa)?;
        best = Some(trial);
        Some(value)
    });
    match (result.value, best) {
        (Some(value), Some(trial)) => {
            LineSearch { step: result.step, mesh: trial, value, accepted: true, trials: result.trials }
        }
        _ => LineSearch { step: result.step, mesh: mesh.clone(), value: f0, accepted: false, trials: result.trials },
    }
}

fn flips_faces(before: &PeriodicSurfaceMesh, cache: &GeometryCache, after: &PeriodicSurfaceMesh) -> bool {
    (0..before.num_faces()).any(|f| {
        let p = after.face_corners(f);
        let n = (p[1] - p[0]).cross(&(p[2] - p[0]));
        n.dot(&cache.face_normal[f]) <= 0.0
    })
}
