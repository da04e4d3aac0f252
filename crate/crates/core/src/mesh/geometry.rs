use faer::sparse::SparseColMat;
use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{shift_vec, MeshError, PeriodicSurfaceMesh, Topology, Vec3};
use crate::linalg::assemble;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GeometryOptions {
    /// Clamp cotangent edge weights to be non-negative.
    pub clamp_cotangents: bool,
}

/// Per-mesh geometric quantities used by the ADC discretization.
#[derive(Debug, Clone)]
pub struct GeometryCache {
    pub topology: Topology,
    pub face_area: Vec<f64>,
    pub face_normal: Vec<Vec3>,
    /// Angle-weighted unit vertex normals.
    pub vertex_normal: Vec<Vec3>,
    /// Cotangent weight `w_ij = (cot α + cot β) / 2` per topology edge.
    pub edge_weight: Vec<f64>,
    /// World-space vector from `edge.v[0]` to `edge.v[1]`.
    pub edge_vector: Vec<Vec3>,
    /// Barycentric vertex area (one third of each incident face).
    pub vertex_area: Vec<f64>,
    /// Positive semidefinite stiffness `S` (`S_ii = Σ w_ij`, `S_ij = -w_ij`).
    pub stiffness: SparseColMat<usize, f64>,
    /// Orthonormal tangent basis `(g1, g2)` per face; rows of `P_f`.
    pub face_basis: Vec<[Vec3; 2]>,
    /// Second fundamental form per face in its tangent basis.
    pub face_sff: Vec<Matrix2<f64>>,
    /// Gradients of the three hat functions on each face.
    pub hat_gradient: Vec<[Vec3; 3]>,
    pub total_area: f64,
}

pub fn build_geometry(mesh: &PeriodicSurfaceMesh, opts: GeometryOptions) -> Result<GeometryCache, crate::Error> {
    let topology = Topology::build(mesh)?;
    let nf = mesh.num_faces();
    let nv = mesh.num_vertices();

    let mut face_area = Vec::with_capacity(nf);
    let mut face_normal = Vec::with_capacity(nf);
    let mut face_basis = Vec::with_capacity(nf);
    let mut hat_gradient = Vec::with_capacity(nf);
    let mut corner_cot = Vec::with_capacity(nf);
    let mut vertex_area = vec![0.0; nv];
    let mut vertex_normal = vec![Vec3::zeros(); nv];

    for f in 0..nf {
        let p = mesh.face_corners(f);
        let cross = (p[1] - p[0]).cross(&(p[2] - p[0]));
        let double_area = cross.norm();
        if !(double_area > 0.0) || !double_area.is_finite() {
            return Err(MeshError::DegenerateFace { face: f, area: 0.5 * double_area }.into());
        }
        let area = 0.5 * double_area;
        let n = cross / double_area;
        let g1 = (p[1] - p[0]).normalize();
        let g2 = n.cross(&g1);

        let mut cots = [0.0; 3];
        let mut grads = [Vec3::zeros(); 3];
        for k in 0..3 {
            let u = p[(k + 1) % 3] - p[k];
            let v = p[(k + 2) % 3] - p[k];
            let cot = u.dot(&v) / double_area;
            if !cot.is_finite() {
                return Err(MeshError::DegenerateFace { face: f, area }.into());
            }
            cots[k] = cot;
            let opposite = p[(k + 2) % 3] - p[(k + 1) % 3];
            grads[k] = n.cross(&opposite) / double_area;
            let angle = u.angle(&v);
            let vi = mesh.faces()[f][k];
            vertex_normal[vi] += angle * n;
            vertex_area[vi] += area / 3.0;
        }

        face_area.push(area);
        face_normal.push(n);
        face_basis.push([g1, g2]);
        hat_gradient.push(grads);
        corner_cot.push(cots);
    }
    for n in vertex_normal.iter_mut() {
        let len = n.norm();
        if len > 0.0 {
            *n /= len;
        }
    }

    let mut edge_weight = Vec::with_capacity(topology.num_edges());
    let mut edge_vector = Vec::with_capacity(topology.num_edges());
    for edge in &topology.edges {
        let mut w = 0.0;
        for side in 0..2 {
            w += 0.5 * corner_cot[edge.faces[side]][edge.slots[side] as usize];
        }
        if opts.clamp_cotangents {
            w = w.max(0.0);
        }
        edge_weight.push(w);
        edge_vector.push(mesh.vertices()[edge.v[1]] - mesh.vertices()[edge.v[0]] + shift_vec(&edge.offset));
    }

    let mut triplets = Vec::with_capacity(4 * topology.num_edges());
    let mut diag = vec![0.0; nv];
    for (edge, &w) in topology.edges.iter().zip(&edge_weight) {
        let [a, b] = edge.v;
        if a == b {
            continue;
        }
        triplets.push((a, b, -w));
        triplets.push((b, a, -w));
        diag[a] += w;
        diag[b] += w;
    }
    triplets.extend(diag.iter().enumerate().map(|(i, &d)| (i, i, d)));
    let stiffness = assemble(nv, triplets)?;

    let face_sff = (0..nf)
        .map(|f| fit_face_sff(mesh, f, &face_basis[f], &vertex_normal))
        .collect();

    let total_area = face_area.iter().sum();
    Ok(GeometryCache {
        topology,
        face_area,
        face_normal,
        vertex_normal,
        edge_weight,
        edge_vector,
        vertex_area,
        stiffness,
        face_basis,
        face_sff,
        hat_gradient,
        total_area,
    })
}

/// Least-squares per-face second fundamental form from the change of vertex
/// normals along the three edges (Rusinkiewicz). With `b = -dn`, each edge
/// `e` with normal difference `Δn` contributes `b·e ≈ -Δn` in the face basis.
fn fit_face_sff(mesh: &PeriodicSurfaceMesh, f: usize, basis: &[Vec3; 2], vertex_normal: &[Vec3]) -> Matrix2<f64> {
    let p = mesh.face_corners(f);
    let idx = mesh.faces()[f];
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for k in 0..3 {
        let (a, b) = ((k + 1) % 3, (k + 2) % 3);
        let e = p[b] - p[a];
        let dn = vertex_normal[idx[b]] - vertex_normal[idx[a]];
        let eu = Vector2::new(e.dot(&basis[0]), e.dot(&basis[1]));
        let du = Vector2::new(dn.dot(&basis[0]), dn.dot(&basis[1]));
        // unknowns (b11, b12, b22)
        let r1 = Vector3::new(eu.x, eu.y, 0.0);
        let r2 = Vector3::new(0.0, eu.x, eu.y);
        ata += r1 * r1.transpose() + r2 * r2.transpose();
        atb += r1 * (-du.x) + r2 * (-du.y);
    }
    let sol = ata
        .cholesky()
        .map(|c| c.solve(&atb))
        .unwrap_or_else(|| ata.pseudo_inverse(1e-14).map(|pi| pi * atb).unwrap_or_else(|_| Vector3::zeros()));
    Matrix2::new(sol.x, sol.y, sol.y, sol.z)
}

impl GeometryCache {
    pub fn num_vertices(&self) -> usize {
        self.vertex_area.len()
    }

    /// Diagonal of the lumped mass matrix.
    pub fn mass_diagonal(&self) -> &[f64] {
        &self.vertex_area
    }

    pub fn mass_matrix(&self) -> SparseColMat<usize, f64> {
        let n = self.num_vertices();
        assemble(n, self.vertex_area.iter().enumerate().map(|(i, &a)| (i, i, a)).collect())
            .expect("diagonal assembly")
    }

    /// `S·u`.
    pub fn apply_stiffness(&self, u: &[f64]) -> Vec<f64> {
        crate::linalg::matvec(&self.stiffness, u)
    }

    /// Discrete Dirichlet energy `uᵀ S u`.
    pub fn dirichlet_energy(&self, u: &[f64]) -> f64 {
        self.apply_stiffness(u).iter().zip(u).map(|(a, b)| a * b).sum()
    }

    /// Tangential gradient of the piecewise-linear function `u` on face `f`.
    pub fn face_gradient(&self, mesh: &PeriodicSurfaceMesh, f: usize, u: &[f64]) -> Vec3 {
        let idx = mesh.faces()[f];
        let g = &self.hat_gradient[f];
        g[0] * u[idx[0]] + g[1] * u[idx[1]] + g[2] * u[idx[2]]
    }

    /// Area-weighted normal covariance `(1/|ω|) Σ_f A_f n_f n_fᵀ`.
    pub fn normal_covariance(&self) -> Matrix3<f64> {
        let mut c = Matrix3::zeros();
        for (n, a) in self.face_normal.iter().zip(&self.face_area) {
            c += n * n.transpose() * *a;
        }
        c / self.total_area
    }

    /// Mean face circumradius, used as the mesh size `h`.
    pub fn mean_circumradius(&self, mesh: &PeriodicSurfaceMesh) -> f64 {
        let sum: f64 = (0..mesh.num_faces())
            .map(|f| {
                let p = mesh.face_corners(f);
                let a = (p[1] - p[0]).norm();
                let b = (p[2] - p[1]).norm();
                let c = (p[0] - p[2]).norm();
                a * b * c / (4.0 * self.face_area[f])
            })
            .sum();
        sum / mesh.num_faces() as f64
    }
}
