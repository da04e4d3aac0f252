use std::collections::HashMap;

use super::{neg_shift, sub_shift, MeshError, PeriodicSurfaceMesh, Shift};

/// An undirected edge of the torus-identified complex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    /// Endpoints; `v[0] <= v[1]`.
    pub v: [usize; 2],
    /// Lattice part of the world vector from `v[0]` to `v[1]`.
    pub offset: Shift,
    /// `faces[0]` traverses the edge `v[0] -> v[1]`, `faces[1]` the reverse.
    pub faces: [usize; 2],
    /// Index of the edge inside each face (the edge opposite that corner).
    pub slots: [u8; 2],
    /// Lattice translation taking the frame of `faces[1]` to that of `faces[0]`.
    pub frame_offset: Shift,
}

/// Edge structure of a closed periodic triangle mesh.
#[derive(Debug, Clone)]
pub struct Topology {
    pub edges: Vec<Edge>,
    /// `face_edges[f][k]` is the edge opposite corner `k` of face `f`.
    pub face_edges: Vec<[usize; 3]>,
    vertex_face_start: Vec<usize>,
    vertex_face_list: Vec<(usize, u8)>,
}

type EdgeKey = (usize, usize, Shift);

/// Canonical key of the half-edge `a -> b` whose lattice part is `d`, and
/// whether it runs along (+) or against (-) the canonical direction.
fn edge_key(a: usize, b: usize, d: Shift) -> (EdgeKey, bool) {
    if a < b {
        ((a, b, d), true)
    } else if a > b {
        ((b, a, neg_shift(&d)), false)
    } else {
        let nd = neg_shift(&d);
        if d >= nd {
            ((a, a, d), true)
        } else {
            ((a, a, nd), false)
        }
    }
}

impl Topology {
    pub fn build(mesh: &PeriodicSurfaceMesh) -> Result<Self, MeshError> {
        let faces = mesh.faces();
        let shifts = mesh.shifts();
        // key -> (forward half-edges, backward half-edges) as (face, slot)
        let mut map: HashMap<EdgeKey, (Vec<(usize, u8)>, Vec<(usize, u8)>)> =
            HashMap::with_capacity(faces.len() * 2);
        for (f, face) in faces.iter().enumerate() {
            for k in 0..3 {
                let (ca, cb) = ((k + 1) % 3, (k + 2) % 3);
                let d = sub_shift(&shifts[f][cb], &shifts[f][ca]);
                let (key, fwd) = edge_key(face[ca], face[cb], d);
                let entry = map.entry(key).or_default();
                if fwd {
                    entry.0.push((f, k as u8));
                } else {
                    entry.1.push((f, k as u8));
                }
            }
        }

        // Deterministic edge order: sort keys.
        let mut keys: Vec<EdgeKey> = map.keys().copied().collect();
        keys.sort_unstable();

        let mut edges = Vec::with_capacity(keys.len());
        let mut face_edges = vec![[usize::MAX; 3]; faces.len()];
        for key in &keys {
            let (fw, bw) = &map[key];
            let total = fw.len() + bw.len();
            let first = fw.first().or(bw.first()).copied().unwrap();
            let (a, b) = (key.0, key.1);
            if total > 2 {
                return Err(MeshError::NonManifoldEdge { face: first.0, a, b, count: total });
            }
            if total == 1 {
                // Look for a partner on the same vertex pair with a different lattice part.
                let partner = map.iter().any(|(k2, (f2, b2))| {
                    k2.0 == a && k2.1 == b && k2.2 != key.2 && f2.len() + b2.len() == 1 && (f2.len() == bw.len())
                });
                if partner {
                    return Err(MeshError::WrapInconsistent { face: first.0, a, b });
                }
                return Err(MeshError::OpenEdge { face: first.0, a, b });
            }
            if fw.len() != 1 {
                return Err(MeshError::Orientation { face: first.0, a, b });
            }
            let (f0, s0) = fw[0];
            let (f1, s1) = bw[0];
            // corner of v[0] in each face
            let c0 = (s0 as usize + 1) % 3;
            let c1 = (s1 as usize + 2) % 3;
            debug_assert_eq!(faces[f0][c0], a);
            debug_assert_eq!(faces[f1][c1], a);
            let frame_offset = sub_shift(&shifts[f0][c0], &shifts[f1][c1]);
            let e = edges.len();
            face_edges[f0][s0 as usize] = e;
            face_edges[f1][s1 as usize] = e;
            edges.push(Edge { v: [a, b], offset: key.2, faces: [f0, f1], slots: [s0, s1], frame_offset });
        }

        let nv = mesh.num_vertices();
        let mut counts = vec![0usize; nv + 1];
        for face in faces {
            for &v in face {
                counts[v + 1] += 1;
            }
        }
        for i in 0..nv {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut list = vec![(0usize, 0u8); faces.len() * 3];
        for (f, face) in faces.iter().enumerate() {
            for (k, &v) in face.iter().enumerate() {
                list[fill[v]] = (f, k as u8);
                fill[v] += 1;
            }
        }

        Ok(Self { edges, face_edges, vertex_face_start: counts, vertex_face_list: list })
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn euler_characteristic(&self, mesh: &PeriodicSurfaceMesh) -> i64 {
        mesh.num_vertices() as i64 - self.num_edges() as i64 + mesh.num_faces() as i64
    }

    /// Faces incident to vertex `v`, with the corner index of `v` in each.
    pub fn vertex_faces(&self, v: usize) -> &[(usize, u8)] {
        &self.vertex_face_list[self.vertex_face_start[v]..self.vertex_face_start[v + 1]]
    }

    pub fn valence(&self, v: usize) -> usize {
        self.vertex_faces(v).len()
    }

    /// The face across edge `e` from face `f`, and the lattice translation
    /// taking that face's frame to the frame of `f`.
    pub fn opposite(&self, e: usize, f: usize) -> (usize, Shift) {
        let edge = &self.edges[e];
        if edge.faces[0] == f {
            (edge.faces[1], edge.frame_offset)
        } else {
            (edge.faces[0], neg_shift(&edge.frame_offset))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Vec3;

    /// A tetrahedron-free minimal torus: 3x3 grid on the plane.
    fn grid_plane() -> PeriodicSurfaceMesh {
        crate::surfgen::plane(3)
    }

    #[test]
    fn plane_edges_pair_up() {
        let m = grid_plane();
        let t = Topology::build(&m).unwrap();
        assert_eq!(t.num_edges(), 3 * m.num_faces() / 2);
        for (e, edge) in t.edges.iter().enumerate() {
            for side in 0..2 {
                assert_eq!(t.face_edges[edge.faces[side]][edge.slots[side] as usize], e);
            }
        }
        assert_eq!(t.euler_characteristic(&m), 0);
    }

    #[test]
    fn frame_offset_maps_shared_vertices() {
        let m = crate::surfgen::plane(4);
        let t = Topology::build(&m).unwrap();
        for edge in &t.edges {
            let [f0, f1] = edge.faces;
            let off = crate::mesh::shift_vec(&edge.frame_offset);
            for &v in &edge.v {
                let k0 = m.faces()[f0].iter().position(|&x| x == v).unwrap();
                let k1 = m.faces()[f1].iter().position(|&x| x == v).unwrap();
                let p0 = m.corner(f0, k0);
                let p1: Vec3 = m.corner(f1, k1) + off;
                assert!((p0 - p1).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn triple_edge_is_non_manifold() {
        let m = crate::surfgen::plane(4);
        let (v, mut f, mut s) = m.into_parts();
        // duplicate face 0 with reversed orientation: its edges are now used 3 times
        let dup = f[0];
        let ds = s[0];
        f.push([dup[0], dup[2], dup[1]]);
        s.push([ds[0], ds[2], ds[1]]);
        let err = PeriodicSurfaceMesh::new(v, f, s).unwrap_err();
        assert!(matches!(err, MeshError::NonManifoldEdge { count: 3, .. }), "{err:?}");
    }

    #[test]
    fn disagreeing_shift_is_wrap_inconsistent() {
        let m = crate::surfgen::plane(4);
        let (v, f, mut s) = m.into_parts();
        // shift the third corner of face 0 by one period in z: the edges
        // through that corner no longer match their twins
        s[0][2][2] += 1;
        let err = PeriodicSurfaceMesh::new(v, f, s).unwrap_err();
        assert!(matches!(err, MeshError::WrapInconsistent { .. }), "{err:?}");
    }
}
