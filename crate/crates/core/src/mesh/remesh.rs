//! Isotropic remeshing: split long edges, collapse short ones, flip towards
//! valence six and relax vertices tangentially.
//!
//! Every local operation works on world-space corner positions of the faces
//! it touches; shifts are recomputed from those positions when the mesh is
//! rebuilt. An operation that would break manifoldness, the link condition
//! or face orientation is skipped.

use std::collections::HashSet;

use super::{lattice_offset, wrap_point, PeriodicSurfaceMesh, Shift, Topology, Vec3};
use crate::Result;

/// Split edges longer than this multiple of the target.
pub const SPLIT_RATIO: f64 = 4.0 / 3.0;
/// Collapse edges shorter than this multiple of the target.
pub const COLLAPSE_RATIO: f64 = 4.0 / 5.0;
/// A collapse may not create edges longer than this multiple of the target.
const COLLAPSE_CAP: f64 = 1.5;
const MAX_ROUNDS: usize = 8;
const RELAX_DAMPING: f64 = 0.5;
/// Smallest allowed cosine between a face normal before and after an operation.
const MIN_NORMAL_COS: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemeshOptions {
    pub target_edge_length: f64,
    /// Outer split/collapse/flip/relax cycles.
    pub iterations: usize,
    pub relax_steps: usize,
}

impl RemeshOptions {
    pub fn new(target_edge_length: f64) -> Self {
        Self { target_edge_length, iterations: 1, relax_steps: 1 }
    }
}

/// Remeshes towards edge lengths near `target_edge_length`.
pub fn remesh(mesh: &PeriodicSurfaceMesh, target_edge_length: f64) -> Result<PeriodicSurfaceMesh> {
    remesh_with(mesh, &RemeshOptions::new(target_edge_length))
}

pub fn remesh_with(mesh: &PeriodicSurfaceMesh, opts: &RemeshOptions) -> Result<PeriodicSurfaceMesh> {
    if !(opts.target_edge_length > 0.0) {
        return Err(crate::Error::invalid("target edge length must be positive"));
    }
    let high = SPLIT_RATIO * opts.target_edge_length;
    let low = COLLAPSE_RATIO * opts.target_edge_length;
    let mut mesh = mesh.clone();
    for _ in 0..opts.iterations {
        mesh = repeat(mesh, |w, t| w.split_pass(t, high))?;
        let cap = COLLAPSE_CAP * opts.target_edge_length;
        mesh = repeat(mesh, |w, t| w.collapse_pass(t, low, cap))?;
        mesh = repeat(mesh, |w, t| w.flip_pass(t))?;
        for _ in 0..opts.relax_steps {
            mesh = relax(&mesh)?;
        }
    }
    // Relaxation and flips move some edges back outside the band. Splitting
    // first and collapsing last keeps every edge below the collapse cap.
    let cap = COLLAPSE_CAP * opts.target_edge_length;
    let mesh = repeat(mesh, |w, t| w.split_pass(t, high))?;
    repeat(mesh, |w, t| w.collapse_pass(t, low, cap))
}

fn repeat(
    mut mesh: PeriodicSurfaceMesh,
    mut pass: impl FnMut(&mut Work, &Topology) -> usize,
) -> Result<PeriodicSurfaceMesh> {
    for _ in 0..MAX_ROUNDS {
        let topo = Topology::build(&mesh)?;
        let mut work = Work::new(&mesh);
        if pass(&mut work, &topo) == 0 {
            break;
        }
        mesh = work.finish()?;
    }
    Ok(mesh)
}

/// Mesh under local edits: faces carry their world-space corners.
pub(crate) struct Work {
    pub(crate) vertices: Vec<Vec3>,
    pub(crate) faces: Vec<Option<([usize; 3], [Vec3; 3])>>,
    touched_faces: Vec<bool>,
    touched_vertices: Vec<bool>,
}

fn normal(p: &[Vec3; 3]) -> Vec3 {
    (p[1] - p[0]).cross(&(p[2] - p[0]))
}

impl Work {
    pub(crate) fn new(mesh: &PeriodicSurfaceMesh) -> Self {
        let faces = (0..mesh.num_faces()).map(|f| Some((mesh.faces()[f], mesh.face_corners(f)))).collect();
        Self {
            vertices: mesh.vertices().to_vec(),
            faces,
            touched_faces: vec![false; mesh.num_faces()],
            touched_vertices: vec![false; mesh.num_vertices()],
        }
    }

    fn face(&self, f: usize) -> &([usize; 3], [Vec3; 3]) {
        self.faces[f].as_ref().expect("live face")
    }

    /// Drops unreferenced vertices and rebuilds shifts.
    pub(crate) fn finish(self) -> Result<PeriodicSurfaceMesh> {
        let mut remap = vec![usize::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        for (mut ids, world) in self.faces.into_iter().flatten() {
            for id in ids.iter_mut() {
                if remap[*id] == usize::MAX {
                    remap[*id] = vertices.len();
                    vertices.push(self.vertices[*id]);
                }
                *id = remap[*id];
            }
            faces.push((ids, world));
        }
        let mesh = PeriodicSurfaceMesh::from_world_faces(vertices, faces);
        mesh.validate()?;
        Ok(mesh)
    }

    fn add_vertex(&mut self, world: &Vec3) -> usize {
        self.vertices.push(wrap_point(world).0);
        self.touched_vertices.push(true);
        self.vertices.len() - 1
    }

    fn push_face(&mut self, ids: [usize; 3], world: [Vec3; 3]) {
        self.faces.push(Some((ids, world)));
        self.touched_faces.push(true);
    }

    /// World positions of the edge endpoints and the opposite corner in `faces[0]`'s frame.
    fn edge_frame(&self, topo: &Topology, e: usize) -> (usize, usize, Vec3, Vec3) {
        let edge = &topo.edges[e];
        let (f, k) = (edge.faces[0], edge.slots[0] as usize);
        let (_, w) = self.face(f);
        (f, k, w[(k + 1) % 3], w[(k + 2) % 3])
    }

    fn edge_length(&self, topo: &Topology, e: usize) -> f64 {
        let (_, _, a, b) = self.edge_frame(topo, e);
        (b - a).norm()
    }

    fn split_pass(&mut self, topo: &Topology, high: f64) -> usize {
        let mut order: Vec<(f64, usize)> = (0..topo.num_edges())
            .map(|e| (self.edge_length(topo, e), e))
            .filter(|&(l, _)| l > high)
            .collect();
        order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut count = 0;
        for (_, e) in order {
            let edge = topo.edges[e];
            if edge.faces[0] == edge.faces[1] || edge.faces.iter().any(|&f| self.touched_faces[f]) {
                continue;
            }
            let (_, _, a, b) = self.edge_frame(topo, e);
            let m = self.add_vertex(&(0.5 * (a + b)));
            for side in 0..2 {
                let (f, k) = (edge.faces[side], edge.slots[side] as usize);
                let (ids, w) = *self.face(f);
                let (c, p, q) = (k, (k + 1) % 3, (k + 2) % 3);
                let mid = 0.5 * (w[p] + w[q]);
                self.faces[f] = Some(([ids[c], ids[p], m], [w[c], w[p], mid]));
                self.touched_faces[f] = true;
                self.push_face([ids[c], m, ids[q]], [w[c], mid, w[q]]);
            }
            count += 1;
        }
        count
    }

    /// Neighbours of `v`, keyed by vertex id and the lattice offset of their
    /// position in the caller's frame, where `v` sits at `origin`.
    fn ring_keys(&self, topo: &Topology, v: usize, origin: &Vec3) -> Vec<(usize, Shift)> {
        let mut keys = Vec::new();
        for &(g, k) in topo.vertex_faces(v) {
            let (ids, w) = self.face(g);
            let k = k as usize;
            let to_caller = frame_round(&(origin - w[k]));
            for o in [(k + 1) % 3, (k + 2) % 3] {
                keys.push((ids[o], lattice_offset(&(w[o] + to_caller - self.vertices[ids[o]]))));
            }
        }
        keys.sort_unstable();
        keys.dedup();
        keys
    }

    fn collapse_pass(&mut self, topo: &Topology, low: f64, high: f64) -> usize {
        let mut order: Vec<(f64, usize)> = (0..topo.num_edges())
            .map(|e| (self.edge_length(topo, e), e))
            .filter(|&(l, _)| l < low)
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut count = 0;
        for (_, e) in order {
            if self.try_collapse(topo, e, high) {
                count += 1;
            }
        }
        count
    }

    fn try_collapse(&mut self, topo: &Topology, e: usize, high: f64) -> bool {
        let edge = topo.edges[e];
        let [a, b] = edge.v;
        if a == b || edge.faces[0] == edge.faces[1] {
            return false;
        }
        let ring_a = topo.vertex_faces(a);
        let ring_b = topo.vertex_faces(b);
        let ring: Vec<(usize, u8, bool)> =
            ring_a.iter().map(|&(f, k)| (f, k, true)).chain(ring_b.iter().map(|&(f, k)| (f, k, false))).collect();
        if ring.iter().any(|&(f, _, _)| self.touched_faces[f])
            || ring.iter().any(|&(f, _, _)| self.face(f).0.iter().any(|&v| self.touched_vertices[v]))
        {
            return false;
        }
        // Faces other than the two on the edge must not contain both endpoints,
        // and no face may repeat a vertex.
        for &(f, _, _) in &ring {
            let ids = self.face(f).0;
            if ids[0] == ids[1] || ids[1] == ids[2] || ids[0] == ids[2] {
                return false;
            }
            if !edge.faces.contains(&f) && ids.contains(&a) && ids.contains(&b) {
                return false;
            }
        }
        if edge.faces.iter().any(|&f| {
            let k = self.face(f).0.iter().position(|&v| v != a && v != b).expect("third corner");
            topo.valence(self.face(f).0[k]) <= 3
        }) {
            return false;
        }

        let (_, _, pa, pb) = self.edge_frame(topo, e);
        // Link condition: the endpoints share exactly the two opposite vertices.
        let keys_a = self.ring_keys(topo, a, &pa);
        let keys_b = self.ring_keys(topo, b, &pb);
        let set_b: HashSet<_> = keys_b.iter().collect();
        let shared = keys_a.iter().filter(|k| set_b.contains(k)).count();
        if shared != 2 {
            return false;
        }

        let Some((target, updates)) =
            [0.5 * (pa + pb), pa, pb].into_iter().find_map(|t| self.collapse_updates(&ring, &edge, t, pa, pb, high))
        else {
            return false;
        };
        for (g, nids, nw) in updates {
            self.faces[g] = Some((nids, nw));
            self.touched_faces[g] = true;
        }
        for f in edge.faces {
            self.faces[f] = None;
            self.touched_faces[f] = true;
        }
        self.vertices[a] = wrap_point(&target).0;
        self.touched_vertices[a] = true;
        self.touched_vertices[b] = true;
        true
    }

    /// Face edits for collapsing `edge` to `target`, or `None` if that would
    /// fold a face or create an overlong edge.
    #[allow(clippy::type_complexity)]
    fn collapse_updates(
        &self,
        ring: &[(usize, u8, bool)],
        edge: &super::Edge,
        target: Vec3,
        pa: Vec3,
        pb: Vec3,
        high: f64,
    ) -> Option<(Vec3, Vec<(usize, [usize; 3], [Vec3; 3])>)> {
        let a = edge.v[0];
        let mut updates = Vec::new();
        for &(g, k, from_a) in ring {
            if edge.faces.contains(&g) {
                continue;
            }
            let (ids, w) = *self.face(g);
            let k = k as usize;
            let origin = if from_a { pa } else { pb };
            // `w[k] - origin` is the lattice translation between the two frames.
            let moved = target + frame_round(&(w[k] - origin));
            let mut nw = w;
            nw[k] = moved;
            let mut nids = ids;
            nids[k] = a;
            let (old, new) = (normal(&w), normal(&nw));
            if new.norm() < 1e-12 || old.dot(&new) < MIN_NORMAL_COS * old.norm() * new.norm() {
                return None;
            }
            for o in [(k + 1) % 3, (k + 2) % 3] {
                if (nw[o] - nw[k]).norm() > high {
                    return None;
                }
            }
            updates.push((g, nids, nw));
        }
        Some((target, updates))
    }

    fn flip_pass(&mut self, topo: &Topology) -> usize {
        let mut count = 0;
        for e in 0..topo.num_edges() {
            if self.try_flip(topo, e) {
                count += 1;
            }
        }
        count
    }

    fn try_flip(&mut self, topo: &Topology, e: usize) -> bool {
        let edge = topo.edges[e];
        let [f0, f1] = edge.faces;
        if f0 == f1 || self.touched_faces[f0] || self.touched_faces[f1] {
            return false;
        }
        let (k0, k1) = (edge.slots[0] as usize, edge.slots[1] as usize);
        let (ids0, w0) = *self.face(f0);
        let (ids1, w1) = *self.face(f1);
        let (a, b, c, d) = (ids0[(k0 + 1) % 3], ids0[(k0 + 2) % 3], ids0[k0], ids1[k1]);
        if [a, b, c, d].iter().any(|&v| self.touched_vertices[v]) {
            return false;
        }
        let distinct = a != b && a != c && a != d && b != c && b != d && c != d;
        if !distinct {
            return false;
        }
        let val = |v: usize| topo.valence(v) as i64;
        if val(a) <= 3 || val(b) <= 3 {
            return false;
        }
        let dev = |x: i64| (x - 6) * (x - 6);
        let before = dev(val(a)) + dev(val(b)) + dev(val(c)) + dev(val(d));
        let after = dev(val(a) - 1) + dev(val(b) - 1) + dev(val(c) + 1) + dev(val(d) + 1);
        if after >= before {
            return false;
        }
        // In face f1 the edge runs b -> a, so corner (k1 + 2) is a.
        let (pa, pb, pc) = (w0[(k0 + 1) % 3], w0[(k0 + 2) % 3], w0[k0]);
        let pd = w1[k1] + (pa - w1[(k1 + 2) % 3]);
        // The new edge c-d must not exist already.
        let key_d = (d, lattice_offset(&(pd - self.vertices[d])));
        let keys_c = self.ring_keys(topo, c, &pc);
        if keys_c.contains(&key_d) {
            return false;
        }
        let (t0, t1) = ([pa, pd, pc], [pd, pb, pc]);
        let old = normal(&w0).normalize() + normal(&w1).normalize();
        for t in [&t0, &t1] {
            let n = normal(t);
            if n.norm() < 1e-12 || n.dot(&old) < MIN_NORMAL_COS * n.norm() * old.norm() {
                return false;
            }
        }
        // Only flip when it does not shrink the smaller minimum angle.
        if min_angle(&t0).min(min_angle(&t1)) < 0.5 * min_angle(&w0).min(min_angle(&w1)) {
            return false;
        }
        self.faces[f0] = Some(([a, d, c], t0));
        self.faces[f1] = Some(([d, b, c], t1));
        self.touched_faces[f0] = true;
        self.touched_faces[f1] = true;
        for v in [a, b, c, d] {
            self.touched_vertices[v] = true;
        }
        true
    }
}

fn frame_round(v: &Vec3) -> Vec3 {
    super::shift_vec(&lattice_offset(v))
}

fn min_angle(p: &[Vec3; 3]) -> f64 {
    (0..3)
        .map(|k| {
            let u = p[(k + 1) % 3] - p[k];
            let v = p[(k + 2) % 3] - p[k];
            u.angle(&v)
        })
        .fold(f64::INFINITY, f64::min)
}

/// One damped step of area-weighted tangential smoothing.
pub fn relax(mesh: &PeriodicSurfaceMesh) -> Result<PeriodicSurfaceMesh> {
    let topo = Topology::build(mesh)?;
    let delta: Vec<Vec3> = (0..mesh.num_vertices())
        .map(|v| {
            let mut centroid = Vec3::zeros();
            let mut area = 0.0;
            let mut nrm = Vec3::zeros();
            for &(f, k) in topo.vertex_faces(v) {
                let p = mesh.face_corners(f);
                let n = normal(&p);
                let a = 0.5 * n.norm();
                centroid += a * ((p[0] + p[1] + p[2]) / 3.0 - p[k as usize]);
                area += a;
                nrm += n;
            }
            if area == 0.0 || nrm.norm() == 0.0 {
                return Vec3::zeros();
            }
            let n = nrm.normalize();
            let c = centroid / area;
            RELAX_DAMPING * (c - n * n.dot(&c))
        })
        .collect();
    let mut out = mesh.clone();
    out.displace(&delta);
    out.validate()?;
    Ok(out)
}

/// Mean world-space edge length.
pub fn mean_edge_length(mesh: &PeriodicSurfaceMesh) -> Result<f64> {
    let topo = Topology::build(mesh)?;
    let total: f64 = topo
        .edges
        .iter()
        .map(|e| {
            let p = mesh.face_corners(e.faces[0]);
            let k = e.slots[0] as usize;
            (p[(k + 2) % 3] - p[(k + 1) % 3]).norm()
        })
        .sum();
    Ok(total / topo.num_edges() as f64)
}

/// Extremes of world-space edge length.
pub fn edge_length_range(mesh: &PeriodicSurfaceMesh) -> Result<(f64, f64)> {
    let topo = Topology::build(mesh)?;
    Ok(topo.edges.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), e| {
        let p = mesh.face_corners(e.faces[0]);
        let k = e.slots[0] as usize;
        let l = (p[(k + 2) % 3] - p[(k + 1) % 3]).norm();
        (lo.min(l), hi.max(l))
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surfgen;

    #[test]
    fn uniform_plane_is_a_fixed_point() {
        let m = surfgen::plane(16);
        let h = 2.0 / 16.0;
        let out = remesh(&m, 1.15 * h).unwrap();
        assert_eq!(out.num_vertices(), m.num_vertices());
        assert_eq!(out.faces(), m.faces());
        for (a, b) in out.vertices().iter().zip(m.vertices()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn plane_stays_planar_under_refinement_and_coarsening() {
        let m = surfgen::plane(12);
        for target in [0.05, 0.4] {
            let mut out = m.clone();
            for _ in 0..3 {
                out = remesh(&out, target).unwrap();
                out.validate().unwrap();
            }
            assert!(out.vertices().iter().all(|v| v.z.abs() < 1e-9));
            assert!((out.total_area() - 4.0).abs() < 1e-9);
            assert_eq!(out.euler_characteristic().unwrap(), 0);
        }
    }

    #[test]
    fn long_edge_is_split() {
        // Stretch one column of the plane so its edges are three times the target.
        let m = surfgen::plane(8);
        let target = 2.0 / 8.0;
        let (lo, hi) = edge_length_range(&m).unwrap();
        assert!(hi < SPLIT_RATIO * 1.5 * target && lo > COLLAPSE_RATIO * target);
        let coarse = surfgen::plane(2);
        let out = remesh(&coarse, 1.0 / 3.0).unwrap();
        assert!(out.num_vertices() > coarse.num_vertices());
        let (_, hi) = edge_length_range(&out).unwrap();
        assert!(hi <= COLLAPSE_CAP / 3.0 + 1e-12);
    }

    #[test]
    fn tpms_remesh_keeps_topology_and_bounds() {
        let m = surfgen::schwarz_p(16);
        let target = 0.12;
        let mut out = m.clone();
        for _ in 0..4 {
            out = remesh(&out, target).unwrap();
            out.validate().unwrap();
        }
        assert_eq!(out.euler_characteristic().unwrap(), -4);
        let (lo, hi) = edge_length_range(&out).unwrap();
        assert!(hi <= 1.5 * target, "max edge {hi}");
        assert!(lo >= 0.5 * target, "min edge {lo}");
        assert!((out.total_area() - m.total_area()).abs() < 0.02 * m.total_area());
    }
}
