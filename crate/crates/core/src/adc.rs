//! Discrete asymptotic conductivity matrix and its bounds.
//!
//! For a unit direction `p` the edge-integrated tangential field
//! `p_ij = p·(x_j - x_i)` gives the integrated divergence
//! `ρ_i = -Σ_j w_ij p_ij`. The cell solution solves `S u = -ρ`, and
//!
//! ```text
//! k_A = κ (I - N - R),   N = (1/|ω|) Σ_f A_f n_f n_fᵀ,   R_ij = -(u^i·ρ^j)/|ω|
//! ```
//!
//! `R` is the Gram matrix of the Dirichlet inner products of the three
//! solutions, so it is positive semidefinite and `k_A` never exceeds the
//! normal-covariance bound `κ (I - N)`.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::StiffnessSolver;
use crate::mesh::{GeometryCache, PeriodicSurfaceMesh, Vec3};
use crate::{Error, Result};

const UNIT_TOL: f64 = 1e-9;

fn check_unit(p: &Vec3) -> Result<()> {
    if (p.norm() - 1.0).abs() > UNIT_TOL {
        return Err(Error::invalid(format!("direction must be a unit vector, |p| = {}", p.norm())));
    }
    Ok(())
}

pub fn axis(i: usize) -> Vec3 {
    let mut e = Vec3::zeros();
    e[i] = 1.0;
    e
}

/// Integrated divergence `ρ` of the tangential part of the unit vector `p`.
pub fn divergence_vector(cache: &GeometryCache, p: &Vec3) -> Result<Vec<f64>> {
    check_unit(p)?;
    Ok(divergence_unchecked(cache, p))
}

fn divergence_unchecked(cache: &GeometryCache, p: &Vec3) -> Vec<f64> {
    let mut rho = vec![0.0; cache.num_vertices()];
    for ((edge, w), e) in cache.topology.edges.iter().zip(&cache.edge_weight).zip(&cache.edge_vector) {
        let flux = w * p.dot(e);
        rho[edge.v[0]] -= flux;
        rho[edge.v[1]] += flux;
    }
    rho
}

/// Solves `S u = -ρ` with zero mass-weighted mean.
pub fn solve_poisson(cache: &GeometryCache, rho: &[f64]) -> Result<Vec<f64>> {
    let solver = StiffnessSolver::new(&cache.stiffness, cache.mass_diagonal())?;
    let rhs: Vec<f64> = rho.iter().map(|r| -r).collect();
    Ok(solver.solve(&rhs)?.u)
}

/// ADC matrix with the per-axis solutions it was assembled from.
#[derive(Debug, Clone)]
pub struct AdcResult {
    pub ka: Matrix3<f64>,
    pub solutions: [Vec<f64>; 3],
    pub divergences: [Vec<f64>; 3],
    pub normal_covariance: Matrix3<f64>,
    pub r_matrix: Matrix3<f64>,
    pub total_area: f64,
    pub kappa: f64,
    pub residuals: [f64; 3],
}

impl AdcResult {
    pub fn aac(&self) -> f64 {
        aac(&self.ka)
    }

    pub fn directional(&self, p: &Vec3) -> f64 {
        adc_directional(&self.ka, p)
    }

    /// `κ (1 - pᵀ N p)`.
    pub fn upper_bound(&self, p: &Vec3) -> f64 {
        self.kappa * (1.0 - p.dot(&(self.normal_covariance * p)))
    }
}

/// Owns the stiffness factorization so that further directions can be solved
/// without refactorizing.
pub struct AdcEvaluator<'a> {
    mesh: &'a PeriodicSurfaceMesh,
    cache: &'a GeometryCache,
    solver: StiffnessSolver,
    kappa: f64,
}

impl<'a> AdcEvaluator<'a> {
    pub fn new(mesh: &'a PeriodicSurfaceMesh, cache: &'a GeometryCache, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::invalid(format!("kappa must be positive, got {kappa}")));
        }
        let solver = StiffnessSolver::new(&cache.stiffness, cache.mass_diagonal())?;
        Ok(Self { mesh, cache, solver, kappa })
    }

    pub fn mesh(&self) -> &PeriodicSurfaceMesh {
        self.mesh
    }

    pub fn cache(&self) -> &GeometryCache {
        self.cache
    }

    /// Divergence and cell solution for direction `p`.
    pub fn solve_direction(&self, p: &Vec3) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        let rho = divergence_vector(self.cache, p)?;
        let rhs: Vec<f64> = rho.iter().map(|r| -r).collect();
        let sol = self.solver.solve(&rhs)?;
        Ok((rho, sol.u, sol.residual))
    }

    pub fn evaluate(&self) -> Result<AdcResult> {
        let solved: Vec<_> = (0..3).into_par_iter().map(|i| self.solve_direction(&axis(i))).collect();
        let mut rhos: [Vec<f64>; 3] = Default::default();
        let mut us: [Vec<f64>; 3] = Default::default();
        let mut residuals = [0.0; 3];
        for (i, s) in solved.into_iter().enumerate() {
            let (rho, u, res) = s?;
            rhos[i] = rho;
            us[i] = u;
            residuals[i] = res;
        }
        let area = self.cache.total_area;
        let mut r = Matrix3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                r[(i, j)] = -dot(&us[i], &rhos[j]) / area;
            }
        }
        let r = 0.5 * (r + r.transpose());
        let n = self.cache.normal_covariance();
        let ka = self.kappa * (Matrix3::identity() - n - r);
        Ok(AdcResult {
            ka,
            solutions: us,
            divergences: rhos,
            normal_covariance: n,
            r_matrix: r,
            total_area: area,
            kappa: self.kappa,
            residuals,
        })
    }

    /// Directional ADC from a fresh solve along `p`, through the matrix-form
    /// expression `κ (1 - pᵀNp + (u_p·ρ_p)/|ω|)`.
    pub fn directional_fresh(&self, p: &Vec3) -> Result<f64> {
        let (rho, u, _) = self.solve_direction(p)?;
        let n = self.cache.normal_covariance();
        Ok(self.kappa * (1.0 - p.dot(&(n * p)) + dot(&u, &rho) / self.cache.total_area))
    }

    /// Directional ADC as the bound minus the Dirichlet energy of the cell
    /// solution: `(1/|ω|) Σ κ (1 - p₃²) A_f - κ uᵀSu / |ω|`.
    pub fn energy_form(&self, p: &Vec3) -> Result<f64> {
        let (_, u, _) = self.solve_direction(p)?;
        let bound: f64 = self
            .cache
            .face_normal
            .iter()
            .zip(&self.cache.face_area)
            .map(|(n, a)| (1.0 - n.dot(p).powi(2)) * a)
            .sum::<f64>()
            / self.cache.total_area;
        let energy = self.cache.dirichlet_energy(&u) / self.cache.total_area;
        Ok(self.kappa * (bound - energy))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn adc_matrix(mesh: &PeriodicSurfaceMesh, cache: &GeometryCache, kappa: f64) -> Result<AdcResult> {
    AdcEvaluator::new(mesh, cache, kappa)?.evaluate()
}

/// `pᵀ k_A p`.
pub fn adc_directional(ka: &Matrix3<f64>, p: &Vector3<f64>) -> f64 {
    p.dot(&(ka * p))
}

/// Bound `κ (1 - pᵀNp)` attained by minimal surfaces and by cylinders parallel to `p`.
pub fn upper_bound_directional(cache: &GeometryCache, kappa: f64, p: &Vec3) -> Result<f64> {
    check_unit(p)?;
    Ok(kappa * (1.0 - p.dot(&(cache.normal_covariance() * p))))
}

/// Average asymptotic conductivity `tr(k_A)/3`.
pub fn aac(ka: &Matrix3<f64>) -> f64 {
    ka.trace() / 3.0
}

pub fn energy_form_adc(mesh: &PeriodicSurfaceMesh, cache: &GeometryCache, kappa: f64, p: &Vec3) -> Result<f64> {
    AdcEvaluator::new(mesh, cache, kappa)?.energy_form(p)
}

/// Hashin–Shtrikman upper bound `2ρκ/(3-ρ)` for an isotropic two-phase
/// composite with void as the second phase.
pub fn hs_bound(rho: f64, kappa: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::invalid(format!("volume fraction {rho} outside [0,1]")));
    }
    Ok(2.0 * rho * kappa / (3.0 - rho))
}

/// Summary written by the `eval` command.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AdcReport {
    #[serde(rename = "kA")]
    pub ka: [[f64; 3]; 3],
    pub aac: f64,
    pub bounds_at_axes: [f64; 3],
    pub area: f64,
    pub euler: i64,
    pub solver_residuals: [f64; 3],
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub directions: Vec<DirectionSample>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectionSample {
    pub p: [f64; 3],
    pub adc: f64,
    pub bound: f64,
}

impl AdcReport {
    pub fn new(result: &AdcResult, euler: i64) -> Self {
        let mut ka = [[0.0; 3]; 3];
        for (i, row) in ka.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = result.ka[(i, j)];
            }
        }
        Self {
            ka,
            aac: result.aac(),
            bounds_at_axes: [0, 1, 2].map(|i| result.upper_bound(&axis(i))),
            area: result.total_area,
            euler,
            solver_residuals: result.residuals,
            directions: Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_geometry, GeometryOptions};
    use crate::surfgen;

    fn eval(m: &PeriodicSurfaceMesh) -> (GeometryCache, AdcResult) {
        let g = build_geometry(m, GeometryOptions::default()).unwrap();
        let r = adc_matrix(m, &g, 1.0).unwrap();
        (g, r)
    }

    #[test]
    fn flat_plane_is_exact() {
        let m = surfgen::plane(32);
        let (g, r) = eval(&m);
        let expect = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0));
        assert!((r.ka - expect).abs().max() < 1e-10, "{}", r.ka);
        for i in 0..3 {
            assert!(divergence_vector(&g, &axis(i)).unwrap().iter().all(|x| x.abs() < 1e-12));
        }
        assert!((upper_bound_directional(&g, 1.0, &axis(0)).unwrap() - 1.0).abs() < 1e-14);
        assert!(upper_bound_directional(&g, 1.0, &axis(2)).unwrap().abs() < 1e-14);
        assert!((energy_form_adc(&m, &g, 1.0, &axis(0)).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn directional_examples() {
        let ka = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0));
        assert_eq!(adc_directional(&ka, &axis(2)), 0.0);
        let p = Vector3::new(1.0, 1.0, 0.0).normalize();
        assert!((adc_directional(&ka, &p) - 1.0).abs() < 1e-15);
        let iso = Matrix3::identity() * (2.0 / 3.0);
        let q = Vector3::new(0.3, -0.5, 0.2).normalize();
        assert!((adc_directional(&iso, &q) - 2.0 / 3.0).abs() < 1e-15);
        assert!((aac(&Matrix3::from_diagonal(&Vector3::new(1.0, 0.0, 0.0))) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn hs_bound_values() {
        assert_eq!(hs_bound(0.0, 1.0).unwrap(), 0.0);
        assert!((hs_bound(1.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(hs_bound(1.2, 1.0).is_err());
        assert!(hs_bound(-0.1, 1.0).is_err());
    }

    #[test]
    fn non_unit_direction_rejected() {
        let m = surfgen::plane(8);
        let g = build_geometry(&m, GeometryOptions::default()).unwrap();
        assert!(divergence_vector(&g, &Vector3::new(1.0, 1.0, 0.0)).is_err());
    }

    #[test]
    fn divergence_is_linear_and_sums_to_zero() {
        let m = surfgen::perturb(&surfgen::schwarz_p(16), &surfgen::PerturbSpec { strength: 0.1, cutoff: 2, seed: 1 });
        let g = build_geometry(&m, GeometryOptions::default()).unwrap();
        let p = Vector3::new(0.2, -0.4, 0.7).normalize();
        let a = divergence_vector(&g, &p).unwrap();
        let b = divergence_vector(&g, &-p).unwrap();
        let scale: f64 = a.iter().map(|x| x.abs()).sum();
        assert!(a.iter().sum::<f64>().abs() < 1e-12 * scale.max(1.0));
        assert!(a.iter().zip(&b).all(|(x, y)| (x + y).abs() < 1e-15));
    }

    #[test]
    fn poisson_inverse_consistency() {
        use rand::{Rng, SeedableRng};
        let m = surfgen::gyroid(16);
        let g = build_geometry(&m, GeometryOptions::default()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut w: Vec<f64> = (0..m.num_vertices()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mean = w.iter().zip(&g.vertex_area).map(|(a, b)| a * b).sum::<f64>() / g.total_area;
        w.iter_mut().for_each(|x| *x -= mean);
        let rho = g.apply_stiffness(&w);
        let u = solve_poisson(&g, &rho).unwrap();
        let err = u.iter().zip(&w).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
        assert!(solve_poisson(&g, &vec![0.0; m.num_vertices()]).unwrap().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn result_invariants_on_perturbed_surface() {
        let m = surfgen::perturb(&surfgen::diamond(16), &surfgen::PerturbSpec { strength: 0.2, cutoff: 2, seed: 5 });
        let (g, r) = eval(&m);
        assert!((r.ka - r.ka.transpose()).abs().max() < 1e-14);
        assert!((r.normal_covariance.trace() - 1.0).abs() < 1e-12);
        let eig = r.ka.symmetric_eigen().eigenvalues;
        assert!(eig.iter().all(|&l| (-1e-12..=1.0 + 1e-12).contains(&l)));
        assert!(r.aac() <= 2.0 / 3.0 + 1e-12);
        for u in &r.solutions {
            let mean: f64 = u.iter().zip(&g.vertex_area).map(|(a, b)| a * b).sum::<f64>() / g.total_area;
            assert!(mean.abs() < 1e-10);
        }
    }

    #[test]
    fn fresh_solve_matches_quadratic_form() {
        let m = surfgen::perturb(&surfgen::schwarz_p(16), &surfgen::PerturbSpec { strength: 0.2, cutoff: 2, seed: 2 });
        let g = build_geometry(&m, GeometryOptions::default()).unwrap();
        let ev = AdcEvaluator::new(&m, &g, 1.0).unwrap();
        let r = ev.evaluate().unwrap();
        let p = Vector3::new(1.0, 1.0, 0.0).normalize();
        let fresh = ev.directional_fresh(&p).unwrap();
        assert!((fresh - r.directional(&p)).abs() < 1e-8 * fresh.abs());
        let energy = ev.energy_form(&p).unwrap();
        assert!((energy - fresh).abs() < 1e-8 * fresh.abs());
    }
}
