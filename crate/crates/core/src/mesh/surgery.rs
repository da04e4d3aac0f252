//! Neck detection and cut-and-cap surgery.
//!
//! Around every vertex a geodesic ball of radius `π × threshold` is flooded
//! along mesh edges. On a sheet that region is a disk; around a neck whose
//! radius is below the threshold it wraps the neck and becomes an annulus
//! (Euler characteristic 0, two short boundary loops). Surgery removes the thinnest such annulus and closes both loops
//! with triangle fans, raising the Euler characteristic by two.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::f64::consts::PI;

use super::remesh::Work;
use super::{add_shift, shift_vec, PeriodicSurfaceMesh, Shift, Topology, Vec3};
use crate::Result;

/// Upper bound on cuts per call.
pub const MAX_SURGERIES: usize = 16;

/// Allowed excess of the boundary loops over two waist circumferences.
const LOOP_SLACK: f64 = 1.5;

type Key = (usize, Shift);

#[derive(Debug, Clone, Copy, PartialEq)]
struct Dist(f64);
impl Eq for Dist {}
impl PartialOrd for Dist {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Dist {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

struct Neck {
    faces: Vec<usize>,
    /// Boundary loops as directed half-edges of the removed region.
    loops: Vec<Vec<(Key, Vec3)>>,
    length: f64,
}

fn position(mesh: &PeriodicSurfaceMesh, key: &Key) -> Vec3 {
    mesh.vertices()[key.0] + shift_vec(&key.1)
}

/// Flood a geodesic ball from vertex `v` and return it if it is an annulus.
fn neck_at(mesh: &PeriodicSurfaceMesh, topo: &Topology, v: usize, radius: f64, max_length: f64) -> Option<Neck> {
    // Dijkstra over (vertex, lattice shift) keys along mesh edges.
    let mut dist: HashMap<Key, f64> = HashMap::new();
    let mut placed: HashMap<usize, Shift> = HashMap::new();
    let mut heap = BinaryHeap::new();
    let start: Key = (v, [0, 0, 0]);
    heap.push(Reverse((Dist(0.0), start)));
    while let Some(Reverse((Dist(d), key))) = heap.pop() {
        if dist.contains_key(&key) {
            continue;
        }
        // The same vertex reached through two lattice copies: the ball wraps the cell.
        match placed.get(&key.0) {
            Some(s) if *s != key.1 => return None,
            _ => {
                placed.insert(key.0, key.1);
            }
        }
        dist.insert(key, d);
        let p = position(mesh, &key);
        for &(g, k) in topo.vertex_faces(key.0) {
            let sh = mesh.shifts()[g];
            let t = super::sub_shift(&key.1, &sh[k as usize]);
            for o in 0..3 {
                let nk: Key = (mesh.faces()[g][o], add_shift(&sh[o], &t));
                if dist.contains_key(&nk) {
                    continue;
                }
                let nd = d + (position(mesh, &nk) - p).norm();
                if nd <= radius {
                    heap.push(Reverse((Dist(nd), nk)));
                }
            }
        }
    }
    let mut region: HashMap<usize, Shift> = HashMap::new();
    for key in dist.keys() {
        for &(g, k) in topo.vertex_faces(key.0) {
            let sh = mesh.shifts()[g];
            let t = super::sub_shift(&key.1, &sh[k as usize]);
            let inside = (0..3).all(|o| dist.contains_key(&(mesh.faces()[g][o], add_shift(&sh[o], &t))));
            if inside {
                region.insert(g, t);
            }
        }
    }
    if region.is_empty() || region.len() == mesh.num_faces() {
        return None;
    }

    let mut half_edges: HashSet<(Key, Key)> = HashSet::new();
    let mut verts: HashSet<Key> = HashSet::new();
    for (&f, t) in &region {
        let ids = mesh.faces()[f];
        let sh = mesh.shifts()[f];
        let keys: [Key; 3] = [0, 1, 2].map(|k| (ids[k], add_shift(&sh[k], t)));
        for k in 0..3 {
            verts.insert(keys[k]);
            half_edges.insert((keys[k], keys[(k + 1) % 3]));
        }
    }
    let boundary: Vec<(Key, Key)> =
        half_edges.iter().filter(|(a, b)| !half_edges.contains(&(*b, *a))).copied().collect();
    let edges = (half_edges.len() + boundary.len()) / 2;
    let chi = verts.len() as i64 - edges as i64 + region.len() as i64;
    if chi != 0 {
        return None;
    }
    let mut next: HashMap<Key, Key> = HashMap::new();
    for (a, b) in &boundary {
        if next.insert(*a, *b).is_some() {
            return None;
        }
    }
    let mut starts: Vec<Key> = next.keys().copied().collect();
    starts.sort_unstable();
    let mut seen = HashSet::new();
    let mut loops = Vec::new();
    let mut length = 0.0;
    for s in starts {
        if seen.contains(&s) {
            continue;
        }
        let mut lp = Vec::new();
        let mut cur = s;
        loop {
            if !seen.insert(cur) {
                break;
            }
            lp.push((cur, position(mesh, &cur)));
            cur = *next.get(&cur)?;
        }
        if cur != s || lp.len() < 3 {
            return None;
        }
        for i in 0..lp.len() {
            length += (lp[(i + 1) % lp.len()].1 - lp[i].1).norm();
        }
        loops.push(lp);
    }
    if loops.len() != 2 || length > max_length {
        return None;
    }
    let mut faces: Vec<usize> = region.into_keys().collect();
    faces.sort_unstable();
    Some(Neck { faces, loops, length })
}

fn cut(mesh: &PeriodicSurfaceMesh, neck: &Neck) -> Result<PeriodicSurfaceMesh> {
    let mut work = Work::new(mesh);
    for &f in &neck.faces {
        work.faces[f] = None;
    }
    for lp in &neck.loops {
        let centre = lp.iter().map(|(_, p)| *p).sum::<Vec3>() / lp.len() as f64;
        work.vertices.push(super::wrap_point(&centre).0);
        let c = work.vertices.len() - 1;
        for i in 0..lp.len() {
            let (a, pa) = lp[i];
            let (b, pb) = lp[(i + 1) % lp.len()];
            work.faces.push(Some(([a.0, b.0, c], [pa, pb, centre])));
        }
    }
    work.finish()
}

/// Cuts every neck thinner than `threshold`, thinnest first.
pub fn detect_and_surgery(mesh: &PeriodicSurfaceMesh, threshold: f64) -> Result<(PeriodicSurfaceMesh, usize)> {
    let mut mesh = mesh.clone();
    if !(threshold > 0.0) {
        return Ok((mesh, 0));
    }
    // A geodesic ball wraps a waist of radius ρ once its radius exceeds πρ;
    // each boundary loop of the annulus is then about one circumference.
    let radius = PI * threshold;
    let max_length = 2.0 * LOOP_SLACK * 2.0 * PI * threshold;
    let mut count = 0;
    'outer: while count < MAX_SURGERIES {
        let topo = Topology::build(&mesh)?;
        let mut necks: Vec<Neck> =
            (0..mesh.num_vertices()).filter_map(|v| neck_at(&mesh, &topo, v, radius, max_length)).collect();
        if necks.is_empty() {
            break;
        }
        necks.sort_by(|a, b| a.length.total_cmp(&b.length));
        for neck in &necks {
            if let Ok(next) = cut(&mesh, neck) {
                mesh = next;
                count += 1;
                continue 'outer;
            }
        }
        break;
    }
    Ok((mesh, count))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::remesh::remesh;
    use crate::surfgen;
    use std::f64::consts::PI;

    #[test]
    fn smooth_surfaces_are_untouched() {
        let m = remesh(&surfgen::schwarz_p(16), 0.1).unwrap();
        let (out, count) = detect_and_surgery(&m, 0.05).unwrap();
        assert_eq!(count, 0);
        assert_eq!(out, m);
        let plane = surfgen::plane(16);
        assert_eq!(detect_and_surgery(&plane, 0.1).unwrap().1, 0);
    }

    #[test]
    fn pinched_tube_is_cut_once() {
        let m = surfgen::revolution(|x| 0.05 + 0.125 * (1.0 - (PI * x).cos()), 96, 24).unwrap();
        assert_eq!(m.euler_characteristic().unwrap(), 0);
        let (out, count) = detect_and_surgery(&m, 0.1).unwrap();
        assert_eq!(count, 1);
        out.validate().unwrap();
        assert_eq!(out.euler_characteristic().unwrap(), 2);
        // The cut sits at the waist.
        let waist = m.vertices().iter().filter(|v| v.x.abs() < 0.02).count();
        let remaining = out.vertices().iter().filter(|v| v.x.abs() < 0.02 && v.y.hypot(v.z) > 0.04).count();
        assert!(waist > 0 && remaining == 0);
    }

    #[test]
    fn thin_threshold_leaves_pinched_tube() {
        let m = surfgen::revolution(|x| 0.05 + 0.125 * (1.0 - (PI * x).cos()), 96, 24).unwrap();
        assert_eq!(detect_and_surgery(&m, 0.02).unwrap().1, 0);
    }
}
