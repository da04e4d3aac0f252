//! Shape gradients of ADC entries under normal vertex motion.
//!
//! With `X_i = ∇u^i + P_f e_i` the total flux field of axis `i` on face `f`,
//! the rates of `I_ij = |ω| k_ij` and of the area under a normal velocity
//! `v` are approximated with one quadrature point per face and hat weights
//! `1/3`:
//!
//! ```text
//! İ_ij ≈ Σ_f Σ_{q∈f} 2κ v_q (A_f/3) X_iᵀ (b_f - tr(b_f)/2 I) X_j
//! Ȧ    ≈ -Σ_f Σ_{q∈f} v_q (A_f/3) tr b_f
//! k̇_ij = İ_ij/A - k_ij Ȧ/A
//! ```
//!
//! The returned vectors hold the coefficients `G_q` of `k̇ = Σ_q G_q v_q`.

use nalgebra::{Matrix2, Matrix2x3, Matrix3};

use super::objective::{GradientFlags, ObjectiveSpec};
use crate::adc::AdcResult;
use crate::mesh::{GeometryCache, PeriodicSurfaceMesh};

/// Per-face quantities shared by every entry gradient.
struct FaceForms {
    /// `Xᵀ (b - tr b/2 I) X` as a 3×3 matrix over axis pairs.
    quad: Vec<Matrix3<f64>>,
    trace_b: Vec<f64>,
}

fn face_forms(mesh: &PeriodicSurfaceMesh, cache: &GeometryCache, adc: &AdcResult) -> FaceForms {
    let nf = mesh.num_faces();
    let mut quad = Vec::with_capacity(nf);
    let mut trace_b = Vec::with_capacity(nf);
    for f in 0..nf {
        let [g1, g2] = cache.face_basis[f];
        let mut x = Matrix2x3::zeros();
        for i in 0..3 {
            let mut flux = cache.face_gradient(mesh, f, &adc.solutions[i]);
            flux[i] += 1.0;
            x[(0, i)] = g1.dot(&flux);
            x[(1, i)] = g2.dot(&flux);
        }
        let b = cache.face_sff[f];
        let tr = b.trace();
        let shaped = b - Matrix2::identity() * (0.5 * tr);
        quad.push(x.transpose() * shaped * x);
        trace_b.push(tr);
    }
    FaceForms { quad, trace_b }
}

/// Coefficients of `Σ_ij D_ij k̇_ij` for a weight matrix `D`.
pub fn weighted_gradient(
    mesh: &PeriodicSurfaceMesh,
    cache: &GeometryCache,
    adc: &AdcResult,
    d: &Matrix3<f64>,
) -> Vec<f64> {
    let forms = face_forms(mesh, cache, adc);
    let area = adc.total_area;
    let kappa = adc.kappa;
    let dk = d.component_mul(&adc.ka).sum();
    let mut g = vec![0.0; mesh.num_vertices()];
    for (f, face) in mesh.faces().iter().enumerate() {
        let q = d.component_mul(&forms.quad[f]).sum();
        let local = cache.face_area[f] / 3.0 * (2.0 * kappa * q + dk * forms.trace_b[f]) / area;
        for &v in face {
            g[v] += local;
        }
    }
    g
}

/// Coefficients of `k̇_A^{ij}`.
pub fn entry_gradient(
    mesh: &PeriodicSurfaceMesh,
    cache: &GeometryCache,
    adc: &AdcResult,
    i: usize,
    j: usize,
) -> Vec<f64> {
    let mut d = Matrix3::zeros();
    d[(i, j)] = 1.0;
    weighted_gradient(mesh, cache, adc, &d)
}

/// Objective value and gradient coefficients, by the chain rule through
/// `∂f/∂k_A`.
pub fn objective_gradient(
    mesh: &PeriodicSurfaceMesh,
    cache: &GeometryCache,
    adc: &AdcResult,
    spec: &ObjectiveSpec,
) -> (f64, Vec<f64>, GradientFlags) {
    let value = spec.value(&adc.ka);
    let (d, flags) = spec.derivative(&adc.ka);
    let g = weighted_gradient(mesh, cache, adc, &d);
    (value, g, flags)
}

/// `sqrt(gᵀ M⁻¹ g)`, the L² norm of the gradient field whose coefficients are `g`.
pub fn gradient_norm(cache: &GeometryCache, g: &[f64]) -> f64 {
    g.iter().zip(cache.mass_diagonal()).map(|(gi, m)| gi * gi / m).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adc::adc_matrix;
    use crate::mesh::{build_geometry, GeometryOptions, Vec3};
    use crate::surfgen::{cylinder, perturb, plane, schwarz_p, PerturbSpec, RandomField};

    fn setup(mesh: &PeriodicSurfaceMesh) -> (GeometryCache, AdcResult) {
        let cache = build_geometry(mesh, GeometryOptions::default()).unwrap();
        let adc = adc_matrix(mesh, &cache, 1.0).unwrap();
        (cache, adc)
    }

    #[test]
    fn plane_gradient_vanishes() {
        let m = plane(16);
        let (cache, adc) = setup(&m);
        for i in 0..3 {
            for j in 0..3 {
                assert!(entry_gradient(&m, &cache, &adc, i, j).iter().all(|g| g.abs() < 1e-14));
            }
        }
        let (value, g, _) = objective_gradient(&m, &cache, &adc, &ObjectiveSpec::aac());
        assert!((value - 2.0 / 3.0).abs() < 1e-12);
        assert!(gradient_norm(&cache, &g) < 1e-14);
    }

    #[test]
    fn cylinder_is_critical_for_axial_entry() {
        let m = cylinder(0.4, 32, 48);
        let (cache, adc) = setup(&m);
        assert!((adc.ka[(0, 0)] - 1.0).abs() < 1e-12);
        let g = entry_gradient(&m, &cache, &adc, 0, 0);
        let weighted: f64 = g.iter().map(|x| x.abs()).sum();
        assert!(weighted <= 1e-6 * cache.total_area, "{weighted}");
    }

    // The flux fields integrate back to the ADC matrix: Σ_f A_f κ X_i·X_j = A k_ij.
    #[test]
    fn flux_fields_reproduce_adc() {
        let m = perturb(&schwarz_p(12), &PerturbSpec { strength: 0.5, cutoff: 2, seed: 3 });
        let (cache, adc) = setup(&m);
        let mut i_mat = Matrix3::zeros();
        for f in 0..m.num_faces() {
            let mut x = [Vec3::zeros(); 3];
            for (i, xi) in x.iter_mut().enumerate() {
                let mut flux = cache.face_gradient(&m, f, &adc.solutions[i]);
                flux[i] += 1.0;
                let n = cache.face_normal[f];
                *xi = flux - n * n.dot(&flux);
            }
            for i in 0..3 {
                for j in 0..3 {
                    i_mat[(i, j)] += cache.face_area[f] * x[i].dot(&x[j]);
                }
            }
        }
        let diff = (i_mat / adc.total_area - adc.ka).norm();
        assert!(diff < 1e-10, "{diff}");
    }

    fn objective_at(mesh: &PeriodicSurfaceMesh, normals: &[Vec3], v: &[f64], t: f64, spec: &ObjectiveSpec) -> f64 {
        let delta: Vec<Vec3> = normals.iter().zip(v).map(|(n, vi)| n * (vi * t)).collect();
        let mut moved = mesh.clone();
        moved.displace(&delta);
        let (_, adc) = setup(&moved);
        spec.value(&adc.ka)
    }

    #[test]
    fn directional_derivative_matches_finite_differences() {
        // Sliver triangles from marching make the curvature fit noisy, so the
        // check runs on an isotropic remesh.
        let mut m = perturb(&schwarz_p(24), &PerturbSpec { strength: 0.3, cutoff: 2, seed: 7 });
        for _ in 0..2 {
            m = crate::mesh::remesh::remesh(&m, 0.08).unwrap();
        }
        let (cache, adc) = setup(&m);
        // Moving along the perturbation itself changes AAC at first order;
        // an unrelated field can make the AAC rate cancel to nearly zero.
        let field = RandomField::new(&PerturbSpec { strength: 1.0, cutoff: 2, seed: 7 });
        let v: Vec<f64> = m.vertices().iter().map(|p| field.eval(p)).collect();
        let delta = 1e-5;
        for spec in [ObjectiveSpec::entry(1, 1), ObjectiveSpec::entry(2, 2), ObjectiveSpec::aac(), ObjectiveSpec::iso_gap()] {
            let (_, g, _) = objective_gradient(&m, &cache, &adc, &spec);
            let analytic: f64 = g.iter().zip(&v).map(|(a, b)| a * b).sum();
            let fd = (objective_at(&m, &cache.vertex_normal, &v, delta, &spec)
                - objective_at(&m, &cache.vertex_normal, &v, -delta, &spec))
                / (2.0 * delta);
            let rel = (analytic - fd).abs() / fd.abs();
            assert!(rel < 0.05, "{spec:?}: analytic {analytic} fd {fd}");
        }
    }
}
