//! Periodic triangle meshes on the flat 3-torus.
//!
//! Vertices live in the fundamental cell `[-1,1)^3`. A face stores, for each
//! of its corners, an integer lattice shift so that the corner's world
//! position is `vertex + PERIOD * shift`. The first corner of every face has
//! the zero shift, which makes the world-space embedding of a face unique.

mod geometry;
mod io;
pub mod remesh;
pub mod surgery;
mod topology;

use nalgebra::Vector3;
use thiserror::Error;

pub use geometry::{build_geometry, GeometryCache, GeometryOptions};
pub use topology::{Edge, Topology};

use crate::{CELL_VOLUME, PERIOD};

pub type Vec3 = Vector3<f64>;

/// Integer lattice offset in units of [`PERIOD`].
pub type Shift = [i32; 3];

pub(crate) const ZERO_SHIFT: Shift = [0, 0, 0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("mesh parse error: {0}")]
    Parse(String),
    #[error("period must be {expected}, found {found}")]
    Period { expected: f64, found: f64 },
    #[error("faces ({faces}) and shifts ({shifts}) have different lengths")]
    ShiftCount { faces: usize, shifts: usize },
    #[error("face {face}: vertex index {index} out of range")]
    VertexIndex { face: usize, index: usize },
    #[error("vertex {vertex}: position is not finite or outside [-1,1)")]
    VertexOutOfCell { vertex: usize },
    #[error("face {face}: shift component outside {{-1,0,1}}")]
    ShiftOutOfRange { face: usize },
    #[error("face {face}: first corner shift must be [0,0,0]")]
    FirstShiftNonZero { face: usize },
    #[error("face {face}: degenerate (area {area:e})")]
    DegenerateFace { face: usize, area: f64 },
    #[error("face {face}: edge ({a},{b}) is shared by {count} faces")]
    NonManifoldEdge { face: usize, a: usize, b: usize, count: usize },
    #[error("face {face}: edge ({a},{b}) has no opposite face")]
    OpenEdge { face: usize, a: usize, b: usize },
    #[error("face {face}: edge ({a},{b}) copies disagree on the lattice translation")]
    WrapInconsistent { face: usize, a: usize, b: usize },
    #[error("face {face}: edge ({a},{b}) is traversed twice in the same direction")]
    Orientation { face: usize, a: usize, b: usize },
    #[error("vertex {vertex} is not referenced by any face")]
    IsolatedVertex { vertex: usize },
    #[error("Euler characteristic {0} is odd")]
    OddEuler(i64),
}

/// Triangle mesh of a closed surface embedded in `T^3 = R^3 / (2Z)^3`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicSurfaceMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    shifts: Vec<[Shift; 3]>,
}

/// Solid volume of the thickened shell and its volume fraction in the cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShellVolume {
    pub volume: f64,
    pub volume_fraction: f64,
}

impl PeriodicSurfaceMesh {
    /// Builds a mesh and checks every invariant.
    pub fn new(
        vertices: Vec<Vec3>,
        faces: Vec<[usize; 3]>,
        shifts: Vec<[Shift; 3]>,
    ) -> Result<Self, MeshError> {
        let mesh = Self { vertices, faces, shifts };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Builds a mesh from faces given by world-space corner positions.
    ///
    /// Vertex positions are stored wrapped into the cell; each corner's
    /// shift is recovered from its world position.
    pub(crate) fn from_world_faces(vertices: Vec<Vec3>, faces: Vec<([usize; 3], [Vec3; 3])>) -> Self {
        let mut out_faces = Vec::with_capacity(faces.len());
        let mut shifts = Vec::with_capacity(faces.len());
        for (f, world) in faces {
            let mut s = [ZERO_SHIFT; 3];
            for k in 0..3 {
                s[k] = lattice_offset(&(world[k] - vertices[f[k]]));
            }
            out_faces.push(f);
            shifts.push(normalize_shifts(s));
        }
        Self { vertices, faces: out_faces, shifts }
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn shifts(&self) -> &[[Shift; 3]] {
        &self.shifts
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn period(&self) -> f64 {
        PERIOD
    }

    /// World position of corner `k` of face `f`.
    #[inline]
    pub fn corner(&self, f: usize, k: usize) -> Vec3 {
        self.vertices[self.faces[f][k]] + shift_vec(&self.shifts[f][k])
    }

    #[inline]
    pub fn face_corners(&self, f: usize) -> [Vec3; 3] {
        [self.corner(f, 0), self.corner(f, 1), self.corner(f, 2)]
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.face_corners(f);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_faces()).map(|f| self.face_area(f)).sum()
    }

    /// Checks every structural and geometric invariant.
    pub fn validate(&self) -> Result<(), MeshError> {
        if self.faces.len() != self.shifts.len() {
            return Err(MeshError::ShiftCount { faces: self.faces.len(), shifts: self.shifts.len() });
        }
        for (i, v) in self.vertices.iter().enumerate() {
            if !v.iter().all(|x| x.is_finite() && (-1.0..1.0).contains(x)) {
                return Err(MeshError::VertexOutOfCell { vertex: i });
            }
        }
        let mut used = vec![false; self.vertices.len()];
        for (f, face) in self.faces.iter().enumerate() {
            for &i in face {
                if i >= self.vertices.len() {
                    return Err(MeshError::VertexIndex { face: f, index: i });
                }
                used[i] = true;
            }
            let s = &self.shifts[f];
            if s[0] != ZERO_SHIFT {
                return Err(MeshError::FirstShiftNonZero { face: f });
            }
            if s.iter().flatten().any(|c| !(-1..=1).contains(c)) {
                return Err(MeshError::ShiftOutOfRange { face: f });
            }
            let area = self.face_area(f);
            if !(area > 0.0) || !area.is_finite() {
                return Err(MeshError::DegenerateFace { face: f, area });
            }
        }
        if let Some(vertex) = used.iter().position(|u| !u) {
            return Err(MeshError::IsolatedVertex { vertex });
        }
        let topo = Topology::build(self)?;
        let chi = self.num_vertices() as i64 - topo.num_edges() as i64 + self.num_faces() as i64;
        if chi % 2 != 0 {
            return Err(MeshError::OddEuler(chi));
        }
        Ok(())
    }

    /// `V - E + F` of the torus-identified complex.
    pub fn euler_characteristic(&self) -> Result<i64, MeshError> {
        let topo = Topology::build(self)?;
        Ok(topo.euler_characteristic(self))
    }

    /// Solid volume `2ε|ω| + (4π/3) ε³ χ` of the shell of half-thickness `eps`.
    pub fn shell_volume(&self, eps: f64) -> Result<ShellVolume, MeshError> {
        let chi = self.euler_characteristic()?;
        Ok(shell_volume_from(self.total_area(), chi, eps))
    }

    /// Moves every vertex by a world-space displacement, re-wraps positions
    /// into the cell and updates corner shifts to keep faces intact.
    pub fn displace(&mut self, delta: &[Vec3]) {
        assert_eq!(delta.len(), self.vertices.len());
        let jumps: Vec<Shift> = self
            .vertices
            .iter_mut()
            .zip(delta)
            .map(|(v, d)| {
                let (w, jump) = wrap_point(&(*v + d));
                *v = w;
                jump
            })
            .collect();
        for (face, shifts) in self.faces.iter().zip(self.shifts.iter_mut()) {
            for k in 0..3 {
                let j = jumps[face[k]];
                for c in 0..3 {
                    shifts[k][c] += j[c];
                }
            }
            *shifts = normalize_shifts(*shifts);
        }
    }

    #[cfg(test)]
    pub(crate) fn into_parts(self) -> (Vec<Vec3>, Vec<[usize; 3]>, Vec<[Shift; 3]>) {
        (self.vertices, self.faces, self.shifts)
    }
}

pub fn shell_volume_from(area: f64, chi: i64, eps: f64) -> ShellVolume {
    let volume = 2.0 * eps * area + 4.0 * std::f64::consts::PI / 3.0 * eps.powi(3) * chi as f64;
    ShellVolume { volume, volume_fraction: volume / CELL_VOLUME }
}

#[inline]
pub(crate) fn shift_vec(s: &Shift) -> Vec3 {
    Vec3::new(s[0] as f64, s[1] as f64, s[2] as f64) * PERIOD
}

/// Nearest lattice offset to a world-space vector that should be a lattice translation.
#[inline]
pub(crate) fn lattice_offset(d: &Vec3) -> Shift {
    [
        (d.x / PERIOD).round() as i32,
        (d.y / PERIOD).round() as i32,
        (d.z / PERIOD).round() as i32,
    ]
}

#[inline]
pub(crate) fn sub_shift(a: &Shift, b: &Shift) -> Shift {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn add_shift(a: &Shift, b: &Shift) -> Shift {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub(crate) fn neg_shift(a: &Shift) -> Shift {
    [-a[0], -a[1], -a[2]]
}

pub(crate) fn normalize_shifts(s: [Shift; 3]) -> [Shift; 3] {
    let base = s[0];
    [ZERO_SHIFT, sub_shift(&s[1], &base), sub_shift(&s[2], &base)]
}

/// Wraps a coordinate into `[-1,1)`, returning the lattice jump that was removed.
#[inline]
pub fn wrap_coord(x: f64) -> (f64, i32) {
    let mut jump = ((x + 1.0) / PERIOD).floor();
    let mut w = x - PERIOD * jump;
    if w >= 1.0 {
        w -= PERIOD;
        jump += 1.0;
    }
    if w < -1.0 {
        w += PERIOD;
        jump -= 1.0;
    }
    (w, jump as i32)
}

#[inline]
pub fn wrap_point(p: &Vec3) -> (Vec3, Shift) {
    let (x, jx) = wrap_coord(p.x);
    let (y, jy) = wrap_coord(p.y);
    let (z, jz) = wrap_coord(p.z);
    (Vec3::new(x, y, z), [jx, jy, jz])
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two triangles per cell of an `n x n` grid on the plane z = 0.
    pub(crate) fn plane(n: usize) -> PeriodicSurfaceMesh {
        crate::surfgen::plane(n)
    }

    #[test]
    fn wrap_coord_stays_in_cell() {
        for &x in &[-1.0, -1.0 - 1e-17, 0.999_999_999_999_999_9, 1.0, 3.0, -3.5, 2.7] {
            let (w, j) = wrap_coord(x);
            assert!((-1.0..1.0).contains(&w), "{x} -> {w}");
            assert!((w + PERIOD * j as f64 - x).abs() < 1e-12);
        }
    }

    #[test]
    fn plane_is_a_valid_torus() {
        let m = plane(8);
        m.validate().unwrap();
        assert_eq!(m.euler_characteristic().unwrap(), 0);
        assert!((m.total_area() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn shell_volume_arithmetic() {
        let v = shell_volume_from(4.0, 0, 0.1);
        assert!((v.volume - 0.8).abs() < 1e-15);
        assert!((v.volume_fraction - 0.1).abs() < 1e-15);
        let v = shell_volume_from(4.0, -4, 0.1);
        assert!((v.volume - (0.8 - 4.0 * std::f64::consts::PI / 3.0 * 0.004)).abs() < 1e-15);
        assert!((v.volume - 0.783245).abs() < 1e-6);
    }

    #[test]
    fn shell_volume_leading_term() {
        let m = plane(4);
        let area = m.total_area();
        for eps in [1e-2, 1e-4, 1e-6] {
            let v = m.shell_volume(eps).unwrap();
            assert!((v.volume / (2.0 * eps * area) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn displace_rewraps_and_keeps_faces() {
        let mut m = plane(6);
        let before: Vec<[Vec3; 3]> = (0..m.num_faces()).map(|f| m.face_corners(f)).collect();
        let d = Vec3::new(0.9, -0.7, 0.0);
        m.displace(&vec![d; m.num_vertices()]);
        m.validate().unwrap();
        for f in 0..m.num_faces() {
            let after = m.face_corners(f);
            let t = after[0] - before[f][0] - d;
            let lat = shift_vec(&lattice_offset(&t));
            for k in 0..3 {
                assert!((after[k] - before[f][k] - d - lat).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_first_shift() {
        let m = plane(4);
        let (v, f, mut s) = m.into_parts();
        s[3][0] = [1, 0, 0];
        let err = PeriodicSurfaceMesh::new(v, f, s).unwrap_err();
        assert_eq!(err, MeshError::FirstShiftNonZero { face: 3 });
    }

    #[test]
    fn rejects_degenerate_face() {
        let m = plane(4);
        let (mut v, f, s) = m.into_parts();
        // collapse one face by moving a vertex onto its neighbour
        let [a, b, _] = f[0];
        v[b] = v[a];
        assert!(matches!(
            PeriodicSurfaceMesh::new(v, f, s),
            Err(MeshError::DegenerateFace { .. }) | Err(MeshError::WrapInconsistent { .. })
        ));
    }
}
