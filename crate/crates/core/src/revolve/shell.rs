//! Finite-difference effective conductivity of a thickened revolution shell.
//!
//! The shell is parameterized by `r_ε(x,θ,z) = r(x,θ) + z n(x)` with
//! `|z| ≤ ε` and outward normal `n = (-R', cos θ, sin θ)/W`, `W = √(1+R'²)`.
//! Writing `k = R''/W³` for the meridian curvature, the tangent vectors are
//!
//! ```text
//! ∂x r_ε = (1 - z k) (1, R' cos θ, R' sin θ)    ∂θ r_ε = ρ (0, -sin θ, cos θ)    ∂z r_ε = n
//! ```
//!
//! with `ρ = R + z/W`, so the metric is diagonal:
//! `g_xx = (1 - z k)² W²`, `g_θθ = ρ²`, `g_zz = 1`, and `√g = ρ √g_xx`.
//! For the axial direction `p = e1` the corrector is axisymmetric, `u = s(x,z)`,
//! and the covariant components of `p` are
//!
//! ```text
//! p_x = e1 · ∂x r_ε = 1 - z k        p_z = e1 · n = -R'/W        p_θ = 0.
//! ```
//!
//! The cell energy `κ ∫ g^{ij}(∂i u + p_i)(∂j u + p_j) √g` becomes, after the
//! θ integral,
//!
//! ```text
//! 2π κ ∫∫ [ a (s_x + p_x)² + b (s_z + p_z)² ] dz dx,   a = ρ/√g_xx,  b = ρ √g_xx,
//! ```
//!
//! i.e. `c0 = κ(a p_x² + b p_z²)`, `c1 = 2κ(a p_x, b p_z)`, `C2 = κ diag(a, b)`.
//! Derivatives use central differences (periodic in x, one-sided second order
//! at `z = ±ε`), and the z integral uses trapezoid weights. The quadratic form
//! is minimized by one sparse solve and `κ_ε = E_min / |Y|`.

use std::f64::consts::PI;

use super::RevolutionProfile;
use crate::linalg::{assemble, StiffnessSolver};
use crate::{Error, Result, CELL_VOLUME};

/// Discretization of the shell cross-section.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShellGrid {
    pub epsilon: f64,
    /// Axial divisions; `x_0` and `x_N` are identified.
    pub n: usize,
    /// Normal divisions; nodes at `z_j = -ε + j Δz`, `j = 0..=M`.
    pub m: usize,
}

impl ShellGrid {
    pub const DEFAULT_N: usize = 4096;
    pub const DEFAULT_M: usize = 16;

    pub fn new(epsilon: f64, n: usize, m: usize) -> Result<Self> {
        if n < 16 || m < 4 {
            return Err(Error::invalid(format!("shell grid needs N >= 16 and M >= 4, got N={n}, M={m}")));
        }
        if !(epsilon > 0.0) {
            return Err(Error::invalid(format!("shell half-thickness must be positive, got {epsilon}")));
        }
        Ok(Self { epsilon, n, m })
    }

    pub fn dx(&self) -> f64 {
        2.0 / self.n as f64
    }

    pub fn dz(&self) -> f64 {
        2.0 * self.epsilon / self.m as f64
    }

    fn node(&self, i: usize, j: usize) -> usize {
        (i % self.n) * (self.m + 1) + j
    }

    /// Stencil of `∂z` at row `j` as (node offset in j, coefficient × 2Δz).
    fn dz_stencil(&self, j: usize) -> [(usize, f64); 3] {
        if j == 0 {
            [(0, -3.0), (1, 4.0), (2, -1.0)]
        } else if j == self.m {
            [(self.m, 3.0), (self.m - 1, -4.0), (self.m - 2, 1.0)]
        } else {
            [(j + 1, 1.0), (j - 1, -1.0), (j, 0.0)]
        }
    }
}

/// Effective axial conductivity and volume fraction of the thickened shell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShellResult {
    pub kappa_eps: f64,
    pub rho_eps: f64,
    pub residual: f64,
}

impl ShellResult {
    pub fn ratio(&self) -> f64 {
        self.kappa_eps / self.rho_eps
    }
}

struct Coefficients {
    weight: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    px: Vec<f64>,
    pz: Vec<f64>,
}

fn coefficients(profile: &RevolutionProfile, grid: &ShellGrid) -> Coefficients {
    let (n, m) = (grid.n, grid.m);
    let size = n * (m + 1);
    let mut c = Coefficients {
        weight: vec![0.0; size],
        a: vec![0.0; size],
        b: vec![0.0; size],
        px: vec![0.0; size],
        pz: vec![0.0; size],
    };
    let (dx, dz) = (grid.dx(), grid.dz());
    for i in 0..n {
        let x = -1.0 + i as f64 * dx;
        let (r, r1, r2) = (profile.r(x), profile.dr(x), profile.d2r(x));
        let w = r1.hypot(1.0);
        let k = r2 / w.powi(3);
        for j in 0..=m {
            let z = -grid.epsilon + j as f64 * dz;
            let idx = grid.node(i, j);
            let stretch = 1.0 - z * k;
            let sqrt_gxx = stretch * w;
            let rho = r + z / w;
            let trapezoid = if j == 0 || j == m { 0.5 * dz } else { dz };
            c.weight[idx] = 2.0 * PI * dx * trapezoid / CELL_VOLUME;
            c.a[idx] = rho / sqrt_gxx;
            c.b[idx] = rho * sqrt_gxx;
            c.px[idx] = stretch;
            c.pz[idx] = -r1 / w;
        }
    }
    c
}

/// Minimizes the discrete shell energy for `p = e1`.
pub fn effective_conductivity_shell(
    profile: &RevolutionProfile,
    grid: &ShellGrid,
    kappa: f64,
) -> Result<ShellResult> {
    let focal = grid.epsilon * profile.max_curvature(8 * grid.n);
    if focal >= 1.0 {
        return Err(Error::ShellSelfIntersection(focal));
    }
    let (n, m) = (grid.n, grid.m);
    let size = n * (m + 1);
    let c = coefficients(profile, grid);
    let (hx, hz) = (0.5 / grid.dx(), 0.5 / grid.dz());

    let x_stencil = |i: usize, j: usize| [(grid.node(i + 1, j), hx), (grid.node(i + n - 1, j), -hx)];
    let z_stencil = |i: usize, j: usize| grid.dz_stencil(j).map(|(jj, v)| (grid.node(i, jj), v * hz));

    let mut triplets = Vec::with_capacity(size * 13);
    let mut rhs = vec![0.0; size];
    for i in 0..n {
        for j in 0..=m {
            let idx = grid.node(i, j);
            let w = c.weight[idx] * kappa;
            for (stencil, coef, p) in [
                (x_stencil(i, j).to_vec(), c.a[idx], c.px[idx]),
                (z_stencil(i, j).to_vec(), c.b[idx], c.pz[idx]),
            ] {
                for &(r, vr) in &stencil {
                    if vr == 0.0 {
                        continue;
                    }
                    rhs[r] -= w * coef * p * vr;
                    for &(s, vs) in &stencil {
                        if vs != 0.0 {
                            triplets.push((r, s, w * coef * vr * vs));
                        }
                    }
                }
            }
        }
    }
    let stiffness = assemble(size, triplets)?;
    let solver = StiffnessSolver::new(&stiffness, &c.weight)?;
    let sol = solver.solve(&rhs)?;
    let s = &sol.u;

    let mut energy = 0.0;
    for i in 0..n {
        for j in 0..=m {
            let idx = grid.node(i, j);
            let sx: f64 = x_stencil(i, j).iter().map(|&(r, v)| v * s[r]).sum();
            let sz: f64 = z_stencil(i, j).iter().map(|&(r, v)| v * s[r]).sum();
            energy += c.weight[idx] * (c.a[idx] * (sx + c.px[idx]).powi(2) + c.b[idx] * (sz + c.pz[idx]).powi(2));
        }
    }
    // Closed genus-one surface: the volume is exactly 2ε|ω|.
    let area = profile.area(1e-13)?;
    let rho_eps = crate::mesh::shell_volume_from(area, 0, grid.epsilon).volume_fraction;
    Ok(ShellResult { kappa_eps: kappa * energy, rho_eps, residual: sol.residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::revolve::adc_axial_analytic;

    #[test]
    fn cylinder_limit() {
        let p = RevolutionProfile::constant(0.3).unwrap();
        let grid = ShellGrid::new(1e-3, 64, 4).unwrap();
        let res = effective_conductivity_shell(&p, &grid, 1.0).unwrap();
        assert!((res.ratio() - 1.0).abs() < 1e-3, "{}", res.ratio());
        // The straight tube carries no corrector, so the ratio is exact.
        assert!((res.ratio() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kappa_scales_linearly() {
        let p = RevolutionProfile::parse("(2+cos(pi*x))/4").unwrap();
        let grid = ShellGrid::new(0.05, 128, 4).unwrap();
        let a = effective_conductivity_shell(&p, &grid, 1.0).unwrap();
        let b = effective_conductivity_shell(&p, &grid, 2.5).unwrap();
        assert!((b.kappa_eps - 2.5 * a.kappa_eps).abs() < 1e-12 * b.kappa_eps);
    }

    #[test]
    fn thin_shell_approaches_closed_form() {
        let p = RevolutionProfile::parse("(2+cos(pi*x))/4").unwrap();
        let exact = adc_axial_analytic(&p, 1e-12).unwrap();
        let grid = ShellGrid::new(0.005, 1024, 8).unwrap();
        let res = effective_conductivity_shell(&p, &grid, 1.0).unwrap();
        assert!((res.ratio() - exact).abs() < 1e-3, "{} vs {exact}", res.ratio());
    }

    #[test]
    fn rejects_thick_shells_and_small_grids() {
        let p = RevolutionProfile::parse("(2+cos(pi*x))/4").unwrap();
        // Smallest radius is 1/4, so ε = 0.3 passes a focal point.
        let grid = ShellGrid::new(0.3, 64, 4).unwrap();
        assert!(matches!(effective_conductivity_shell(&p, &grid, 1.0), Err(Error::ShellSelfIntersection(_))));
        assert!(ShellGrid::new(0.1, 8, 4).is_err());
        assert!(ShellGrid::new(0.1, 64, 2).is_err());
    }
}
