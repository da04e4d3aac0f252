//! Shape optimization of the middle surface under normal motion.
//!
//! Each iteration runs surgery, remeshing, evaluation of `k_A` and the
//! objective gradient, screened preconditioning, an Armijo line search and
//! the convergence test.

pub mod gradient;
pub mod objective;
pub mod step;

use serde::{Deserialize, Serialize};

pub use gradient::{entry_gradient, gradient_norm, objective_gradient, weighted_gradient};
pub use objective::{sample_targets, GradientFlags, ObjectiveKind, ObjectiveSpec, Sense};
pub use step::{armijo_step, backtrack, precondition, ArmijoConfig, LineSearch};

use crate::adc::adc_matrix;
use crate::mesh::{build_geometry, remesh, surgery, GeometryOptions, PeriodicSurfaceMesh};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConvergenceConfig {
    /// Stop after this many consecutive failed line searches.
    pub min_step_repeats: usize,
    /// Number of recent iterations in the objective-rate regression.
    pub regression_window: usize,
    /// Stop once the regressed `|df/dt|` falls below this.
    pub slope_tol: f64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self { min_step_repeats: 5, regression_window: 50, slope_tol: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct OptConfig {
    pub kappa: f64,
    pub precondition_strength: f64,
    pub fairing_weight: f64,
    pub armijo: ArmijoConfig,
    pub convergence: ConvergenceConfig,
    /// Remesh to this edge length every iteration; `None` keeps connectivity.
    pub remesh_target_length: Option<f64>,
    /// Neck radius below which surgery cuts a handle; `None` disables it.
    pub surgery_threshold: Option<f64>,
    pub max_iterations: usize,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            kappa: 1.0,
            precondition_strength: 1.0,
            fairing_weight: 0.1,
            armijo: ArmijoConfig::default(),
            convergence: ConvergenceConfig::default(),
            remesh_target_length: None,
            surgery_threshold: None,
            max_iterations: 300,
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<()> {
        self.armijo.validate()?;
        let positive = |x: f64| x > 0.0 && x.is_finite();
        let ok = positive(self.kappa)
            && self.precondition_strength >= 0.0
            && self.precondition_strength.is_finite()
            && self.fairing_weight >= 0.0
            && self.fairing_weight.is_finite()
            && self.convergence.min_step_repeats > 0
            && self.convergence.regression_window >= 2
            && positive(self.convergence.slope_tol)
            && self.remesh_target_length.is_none_or(positive)
            && self.surgery_threshold.is_none_or(positive)
            && self.max_iterations > 0;
        if !ok {
            return Err(Error::invalid(format!("invalid optimizer settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IterationRecord {
    pub iteration: usize,
    /// Objective after surgery and remeshing, before the step.
    pub objective: f64,
    /// Objective after the step (equal to `objective` when the search failed).
    pub accepted_objective: f64,
    pub step: f64,
    pub line_search_accepted: bool,
    /// Sum of accepted steps so far.
    pub flow_time: f64,
    pub vertices: usize,
    pub faces: usize,
    pub area: f64,
    pub euler: i64,
    pub surgeries: usize,
    pub gradient_norm: f64,
    pub aac: f64,
    pub ka: [[f64; 3]; 3],
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "reason", content = "detail")]
pub enum StopReason {
    MinStep,
    Stalled,
    MaxIterations,
    /// The mesh became invalid; the last good mesh is returned.
    Aborted(String),
}

#[derive(Debug, Clone)]
pub struct OptOutcome {
    pub mesh: PeriodicSurfaceMesh,
    pub records: Vec<IterationRecord>,
    pub stop: StopReason,
}

pub fn optimize(mesh: &PeriodicSurfaceMesh, spec: &ObjectiveSpec, cfg: &OptConfig) -> Result<OptOutcome> {
    optimize_with(mesh, spec, cfg, |_| {})
}

/// Runs the pipeline, handing each record to `on_record` as it is produced.
pub fn optimize_with(
    mesh: &PeriodicSurfaceMesh,
    spec: &ObjectiveSpec,
    cfg: &OptConfig,
    mut on_record: impl FnMut(&IterationRecord),
) -> Result<OptOutcome> {
    cfg.validate()?;
    mesh.validate()?;
    let mut current = mesh.clone();
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut flow_time = 0.0;
    let mut failures = 0;

    let abort = |mesh: PeriodicSurfaceMesh, records: Vec<IterationRecord>, e: Error| {
        Ok(OptOutcome { mesh, records, stop: StopReason::Aborted(e.to_string()) })
    };

    for iteration in 0..cfg.max_iterations {
        let mut work = current.clone();
        let mut surgeries = 0;
        if let Some(threshold) = cfg.surgery_threshold {
            match surgery::detect_and_surgery(&work, threshold) {
                Ok((m, n)) => {
                    work = m;
                    surgeries = n;
                }
                Err(e) => return abort(current, records, e),
            }
        }
        if let Some(target) = cfg.remesh_target_length {
            match remesh::remesh(&work, target) {
                Ok(m) => work = m,
                Err(e) => return abort(current, records, e),
            }
        }
        if let Err(e) = work.validate() {
            return abort(current, records, e.into());
        }

        let evaluated = (|| -> Result<_> {
            let cache = build_geometry(&work, GeometryOptions::default())?;
            let adc = adc_matrix(&work, &cache, cfg.kappa)?;
            let euler = work.euler_characteristic()?;
            Ok((cache, adc, euler))
        })();
        let (cache, adc, euler) = match evaluated {
            Ok(v) if iteration == 0 => v,
            Ok(v) => v,
            Err(e) if iteration == 0 => return Err(e),
            Err(e) => return abort(current, records, e),
        };
        let (f0, g, flags) = objective_gradient(&work, &cache, &adc, spec);
        if !f0.is_finite() {
            return abort(current, records, Error::invalid("objective is not finite"));
        }
        let d = match precondition(&cache, &g, cfg.precondition_strength) {
            Ok(d) => d,
            Err(e) => return abort(current, records, e),
        };
        let ls = armijo_step(&work, &cache, spec, &d, f0, &g, cfg.fairing_weight, cfg.kappa, &cfg.armijo);
        if ls.accepted {
            flow_time += ls.step;
            failures = 0;
        } else {
            failures += 1;
        }

        let mut labels = flags.labels();
        if !ls.accepted {
            labels.push("line-search-failed".to_string());
        }
        let record = IterationRecord {
            iteration,
            objective: f0,
            accepted_objective: ls.value,
            step: ls.step,
            line_search_accepted: ls.accepted,
            flow_time,
            vertices: work.num_vertices(),
            faces: work.num_faces(),
            area: cache.total_area,
            euler,
            surgeries,
            gradient_norm: gradient_norm(&cache, &g),
            aac: adc.aac(),
            ka: std::array::from_fn(|i| std::array::from_fn(|j| adc.ka[(i, j)])),
            flags: labels,
        };
        on_record(&record);
        records.push(record);
        current = ls.mesh;

        if failures >= cfg.convergence.min_step_repeats {
            return Ok(OptOutcome { mesh: current, records, stop: StopReason::MinStep });
        }
        if let Some(rate) = objective_rate(&records, cfg.convergence.regression_window) {
            if rate.abs() < cfg.convergence.slope_tol {
                return Ok(OptOutcome { mesh: current, records, stop: StopReason::Stalled });
            }
        }
    }
    Ok(OptOutcome { mesh: current, records, stop: StopReason::MaxIterations })
}

/// Least-squares slope of the accepted objective against flow time over the
/// last `window` records, once that many exist.
pub fn objective_rate(records: &[IterationRecord], window: usize) -> Option<f64> {
    if records.len() < window {
        return None;
    }
    let tail = &records[records.len() - window..];
    let pts: Vec<(f64, f64)> = tail.iter().map(|r| (r.flow_time, r.accepted_objective)).collect();
    least_squares_slope(&pts)
}

/// Slope of the least-squares line through `pts`, or `None` when the
/// abscissae do not vary.
pub fn least_squares_slope(pts: &[(f64, f64)]) -> Option<f64> {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surfgen::{perturb, plane, schwarz_p, PerturbSpec};

    #[test]
    fn config_validation() {
        OptConfig::default().validate().unwrap();
        let bad = OptConfig { armijo: ArmijoConfig { shrink_factor: 1.0, ..Default::default() }, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = OptConfig { remesh_target_length: Some(0.0), ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn slope_fit_recovers_line() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64 * 0.5, 3.0 - 0.2 * i as f64 * 0.5)).collect();
        assert!((least_squares_slope(&pts).unwrap() + 0.2).abs() < 1e-12);
        assert!(least_squares_slope(&[(1.0, 0.0), (1.0, 2.0)]).is_none());
    }

    #[test]
    fn first_step_from_perturbed_plane_increases_aac() {
        let m = perturb(&plane(24), &PerturbSpec { strength: 0.3, cutoff: 2, seed: 5 });
        let cfg = OptConfig { max_iterations: 1, ..Default::default() };
        let out = optimize(&m, &ObjectiveSpec::aac(), &cfg).unwrap();
        let r = &out.records[0];
        assert!(r.line_search_accepted);
        assert!(r.step >= cfg.armijo.min_step);
        assert!(r.accepted_objective > r.objective);
    }

    #[test]
    fn tpms_input_stays_put() {
        let m = schwarz_p(16);
        let cfg = OptConfig { max_iterations: 20, ..Default::default() };
        let out = optimize(&m, &ObjectiveSpec::aac(), &cfg).unwrap();
        let first = out.records.first().unwrap().objective;
        let last = out.records.last().unwrap().accepted_objective;
        assert!(last >= first - 1e-3, "{first} -> {last}");
    }

    #[test]
    fn records_serialize_as_json_lines() {
        let m = perturb(&plane(12), &PerturbSpec { strength: 0.2, cutoff: 1, seed: 2 });
        let out = optimize(&m, &ObjectiveSpec::aac(), &OptConfig { max_iterations: 2, ..Default::default() }).unwrap();
        for r in &out.records {
            let line = serde_json::to_string(r).unwrap();
            assert!(!line.contains('\n'));
            let back: IterationRecord = serde_json::from_str(&line).unwrap();
            assert_eq!(&back, r);
        }
    }
}
