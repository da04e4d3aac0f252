//! Seed surfaces: planes, tubes, TPMS approximants and random perturbations.

mod marching;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use marching::march;

use crate::mesh::{build_geometry, wrap_point, GeometryOptions, PeriodicSurfaceMesh, Vec3};
use crate::revolve::Expr;
use crate::{Error, Result};

/// Flat torus section `z = 0` on an `n × n` grid.
pub fn plane(n: usize) -> PeriodicSurfaceMesh {
    assert!(n >= 1);
    let h = 2.0 / n as f64;
    let coord = |i: usize| -1.0 + i as f64 * h;
    let id = |i: usize, j: usize| (i % n) * n + (j % n);
    let vertices = (0..n * n).map(|k| Vec3::new(coord(k / n), coord(k % n), 0.0)).collect();
    let world = |i: usize, j: usize| Vec3::new(coord(i), coord(j), 0.0);
    let mut faces = Vec::with_capacity(2 * n * n);
    for i in 0..n {
        for j in 0..n {
            let (a, b, c, d) = ((i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1));
            for tri in [[a, b, c], [a, c, d]] {
                faces.push((tri.map(|(x, y)| id(x, y)), tri.map(|(x, y)| world(x, y))));
            }
        }
    }
    PeriodicSurfaceMesh::from_world_faces(vertices, faces)
}

/// Surface of revolution `(x, R(x) cos θ, R(x) sin θ)` with outward normals.
/// Vertices lie exactly on the surface.
pub fn revolution(radius: impl Fn(f64) -> f64, nx: usize, ntheta: usize) -> Result<PeriodicSurfaceMesh> {
    if nx < 8 || ntheta < 8 {
        return Err(Error::invalid(format!("revolution mesh needs nx, ntheta >= 8, got {nx} x {ntheta}")));
    }
    let point = |i: usize, j: usize| {
        let x = -1.0 + 2.0 * i as f64 / nx as f64;
        let theta = 2.0 * PI * j as f64 / ntheta as f64;
        let r = radius(x);
        Vec3::new(x, r * theta.cos(), r * theta.sin())
    };
    let id = |i: usize, j: usize| (i % nx) * ntheta + (j % ntheta);
    let vertices = (0..nx * ntheta).map(|k| wrap_point(&point(k / ntheta, k % ntheta)).0).collect();
    let mut faces = Vec::with_capacity(2 * nx * ntheta);
    for i in 0..nx {
        for j in 0..ntheta {
            let (a, b, c, d) = ((i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1));
            // (θ-direction) × (x-direction) points away from the axis.
            for tri in [[a, c, b], [a, d, c]] {
                faces.push((tri.map(|(x, y)| id(x, y)), tri.map(|(x, y)| point(x, y))));
            }
        }
    }
    let mesh = PeriodicSurfaceMesh::from_world_faces(vertices, faces);
    mesh.validate()?;
    Ok(mesh)
}

/// Straight prism tube of radius `r` along the x axis.
pub fn cylinder(r: f64, nx: usize, ntheta: usize) -> PeriodicSurfaceMesh {
    revolution(|_| r, nx, ntheta).expect("cylinder parameters")
}

#[derive(Debug, Clone, PartialEq)]
pub enum ImplicitKind {
    SchwarzP,
    Gyroid,
    Diamond,
    Iwp,
    Plane,
    /// Expression in `x`, `y`, `z`; must have period 2 in each.
    Custom(Expr),
}

impl ImplicitKind {
    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "schwarz-p" => Self::SchwarzP,
            "gyroid" => Self::Gyroid,
            "diamond" => Self::Diamond,
            "iwp" => Self::Iwp,
            "plane" => Self::Plane,
            _ => return None,
        })
    }

    pub fn eval(&self, p: &Vec3) -> f64 {
        let (x, y, z) = (PI * p.x, PI * p.y, PI * p.z);
        match self {
            Self::SchwarzP => x.cos() + y.cos() + z.cos(),
            Self::Gyroid => x.sin() * y.cos() + y.sin() * z.cos() + z.sin() * x.cos(),
            Self::Diamond => {
                x.sin() * y.sin() * z.sin()
                    + x.sin() * y.cos() * z.cos()
                    + x.cos() * y.sin() * z.cos()
                    + x.cos() * y.cos() * z.sin()
            }
            Self::Iwp => {
                2.0 * (x.cos() * y.cos() + y.cos() * z.cos() + z.cos() * x.cos())
                    - ((2.0 * x).cos() + (2.0 * y).cos() + (2.0 * z).cos())
            }
            Self::Plane => p.z,
            Self::Custom(e) => e.eval(&[p.x, p.y, p.z]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitSpec {
    pub kind: ImplicitKind,
    pub level: f64,
    pub resolution: usize,
}

impl ImplicitSpec {
    pub const MIN_RESOLUTION: usize = 32;

    pub fn new(kind: ImplicitKind, resolution: usize) -> Self {
        Self { kind, level: 0.0, resolution }
    }
}

/// Triangulates the level set of a periodic implicit function.
pub fn generate_implicit(spec: &ImplicitSpec) -> Result<PeriodicSurfaceMesh> {
    if spec.resolution < ImplicitSpec::MIN_RESOLUTION {
        return Err(Error::invalid(format!(
            "implicit resolution must be at least {}, got {}",
            ImplicitSpec::MIN_RESOLUTION,
            spec.resolution
        )));
    }
    if spec.kind == ImplicitKind::Plane && spec.level == 0.0 {
        return Ok(plane(spec.resolution));
    }
    let level = spec.level;
    let kind = &spec.kind;
    march(&|p: &Vec3| kind.eval(p) - level, spec.resolution)
}

/// Moves every vertex onto the level set `kind = level` by Newton steps along
/// the central-difference gradient.
///
/// Remeshing samples the piecewise-flat input, which leaves curvature noise
/// of order one once the target length approaches the marching grid spacing.
/// Snapping afterwards restores a smooth sampling.
pub fn project_to_level_set(mesh: &PeriodicSurfaceMesh, kind: &ImplicitKind, level: f64) -> PeriodicSurfaceMesh {
    const H: f64 = 1e-6;
    const STEPS: usize = 8;
    let f = |p: &Vec3| kind.eval(p) - level;
    let delta: Vec<Vec3> = mesh
        .vertices()
        .iter()
        .map(|&start| {
            let mut p = start;
            for _ in 0..STEPS {
                let g = Vec3::new(
                    f(&(p + Vec3::x() * H)) - f(&(p - Vec3::x() * H)),
                    f(&(p + Vec3::y() * H)) - f(&(p - Vec3::y() * H)),
                    f(&(p + Vec3::z() * H)) - f(&(p - Vec3::z() * H)),
                ) / (2.0 * H);
                let g2 = g.norm_squared();
                if g2 == 0.0 {
                    break;
                }
                let step = g * (f(&p) / g2);
                p -= step;
                if step.norm() < 1e-14 {
                    break;
                }
            }
            p - start
        })
        .collect();
    let mut out = mesh.clone();
    out.displace(&delta);
    out
}

fn tpms(kind: ImplicitKind, n: usize) -> PeriodicSurfaceMesh {
    march(&|p: &Vec3| kind.eval(p), n).expect("approximant level set is non-empty")
}

/// Schwarz-P approximant on an `n³` grid (no minimum resolution).
pub fn schwarz_p(n: usize) -> PeriodicSurfaceMesh {
    tpms(ImplicitKind::SchwarzP, n)
}

pub fn gyroid(n: usize) -> PeriodicSurfaceMesh {
    tpms(ImplicitKind::Gyroid, n)
}

pub fn diamond(n: usize) -> PeriodicSurfaceMesh {
    tpms(ImplicitKind::Diamond, n)
}

pub fn iwp(n: usize) -> PeriodicSurfaceMesh {
    tpms(ImplicitKind::Iwp, n)
}

/// Random smooth normal displacement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbSpec {
    pub strength: f64,
    /// Largest wavevector norm in the random field.
    pub cutoff: u32,
    pub seed: u64,
}

impl Default for PerturbSpec {
    fn default() -> Self {
        Self { strength: 0.0, cutoff: 2, seed: 0 }
    }
}

/// Root-mean-square displacement per unit strength.
const FIELD_RMS: f64 = 0.25;

/// Periodic random field `Σ a_k cos(π k·x + φ_k)` with `a_k ∝ ξ_k / |k|²`.
#[derive(Debug, Clone)]
pub struct RandomField {
    modes: Vec<(Vec3, f64, f64)>,
}

impl RandomField {
    pub fn new(spec: &PerturbSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let c = spec.cutoff as i32;
        let mut modes = Vec::new();
        for kx in -c..=c {
            for ky in -c..=c {
                for kz in -c..=c {
                    let k = [kx, ky, kz];
                    let norm2 = (kx * kx + ky * ky + kz * kz) as f64;
                    // One representative of each ±k pair.
                    let leading = k.iter().copied().find(|&v| v != 0);
                    if norm2 == 0.0 || norm2 > (c * c) as f64 || leading < Some(0) {
                        continue;
                    }
                    let xi: f64 = rng.sample(StandardNormal);
                    let phase = rng.gen_range(0.0..2.0 * PI);
                    modes.push((Vec3::new(kx as f64, ky as f64, kz as f64) * PI, xi / norm2, phase));
                }
            }
        }
        // Normalize the expected mean square of the field to (strength · FIELD_RMS)².
        let variance: f64 = modes.iter().map(|(k, _, _)| 0.5 * (PI * PI / k.norm_squared()).powi(2)).sum();
        let scale = if variance > 0.0 { spec.strength * FIELD_RMS / variance.sqrt() } else { 0.0 };
        for m in &mut modes {
            m.1 *= scale;
        }
        Self { modes }
    }

    pub fn eval(&self, p: &Vec3) -> f64 {
        self.modes.iter().map(|(k, a, phase)| a * (k.dot(p) + phase).cos()).sum()
    }
}

/// Displaces every vertex along its normal by a seeded random field.
/// Self-intersections are not detected.
pub fn perturb(mesh: &PeriodicSurfaceMesh, spec: &PerturbSpec) -> PeriodicSurfaceMesh {
    if spec.strength == 0.0 {
        return mesh.clone();
    }
    let field = RandomField::new(spec);
    let geom = build_geometry(mesh, GeometryOptions::default()).expect("perturb requires a valid mesh");
    let delta: Vec<Vec3> =
        mesh.vertices().iter().zip(&geom.vertex_normal).map(|(v, n)| n * field.eval(v)).collect();
    let mut out = mesh.clone();
    out.displace(&delta);
    out
}
