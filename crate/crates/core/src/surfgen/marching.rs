//! Marching tetrahedra on the periodic grid.
//!
//! Each grid cube is split into 24 tetrahedra spanned by the cube centre,
//! one face centre and one edge of that face. The split is invariant under
//! the full cubic group, so level sets of cubic-symmetric functions come
//! out with the same symmetry, and every cube face is triangulated the same
//! way from both sides, so the output is conforming across cubes and across
//! the periodic boundary.
//!
//! Points are addressed on a doubled lattice: cube corners have even
//! coordinates, centres odd ones. Grid corners sit at half-cell offsets
//! `-1 + (i + 1/2) h`, which keeps them off the symmetry planes of the
//! standard approximants.

use std::collections::HashMap;

use crate::mesh::{wrap_point, PeriodicSurfaceMesh, Vec3};
use crate::{Error, Result, PERIOD};

/// Interpolation parameters are kept away from edge endpoints so that no
/// triangle collapses when the level set passes through a lattice point.
const T_CLAMP: f64 = 0.02;

const ZERO_SNAP: f64 = 1e-12;

type Lattice = [i64; 3];

struct Grid<'a> {
    n: usize,
    h: f64,
    values: Vec<f64>,
    f: &'a (dyn Fn(&Vec3) -> f64 + Sync),
}

impl Grid<'_> {
    fn lattice_len(&self) -> i64 {
        2 * self.n as i64
    }

    fn wrap(&self, c: &Lattice) -> Lattice {
        let l = self.lattice_len();
        [c[0].rem_euclid(l), c[1].rem_euclid(l), c[2].rem_euclid(l)]
    }

    fn index(&self, c: &Lattice) -> usize {
        let w = self.wrap(c);
        let l = self.lattice_len();
        ((w[0] * l + w[1]) * l + w[2]) as usize
    }

    fn position(&self, c: &Lattice) -> Vec3 {
        Vec3::new(
            -1.0 + (c[0] as f64 * 0.5 + 0.5) * self.h,
            -1.0 + (c[1] as f64 * 0.5 + 0.5) * self.h,
            -1.0 + (c[2] as f64 * 0.5 + 0.5) * self.h,
        )
    }

    fn value(&self, c: &Lattice) -> f64 {
        self.values[self.index(c)]
    }
}

struct Builder<'g, 'a> {
    grid: &'g Grid<'a>,
    vertices: Vec<Vec3>,
    lookup: HashMap<(Lattice, Lattice), usize>,
    faces: Vec<([usize; 3], [Vec3; 3])>,
}

impl Builder<'_, '_> {
    /// Crossing on the lattice edge `a–b`, returned as (vertex id, position in
    /// the caller's frame).
    fn crossing(&mut self, a: &Lattice, b: &Lattice) -> (usize, Vec3) {
        let (wa, wb) = (self.grid.wrap(a), self.grid.wrap(b));
        let (p, q, wp, wq) = if wa <= wb { (a, b, wa, wb) } else { (b, a, wb, wa) };
        let (fp, fq) = (self.grid.value(p), self.grid.value(q));
        let t = (fp / (fp - fq)).clamp(T_CLAMP, 1.0 - T_CLAMP);
        let (xp, xq) = (self.grid.position(p), self.grid.position(q));
        let world = xp + (xq - xp) * t;
        let id = *self.lookup.entry((wp, wq)).or_insert_with(|| {
            self.vertices.push(wrap_point(&world).0);
            self.vertices.len() - 1
        });
        (id, world)
    }

    fn emit(&mut self, tri: [(usize, Vec3); 3], toward: &Vec3) {
        let n = (tri[1].1 - tri[0].1).cross(&(tri[2].1 - tri[0].1));
        let tri = if n.dot(toward) >= 0.0 { tri } else { [tri[0], tri[2], tri[1]] };
        self.faces.push(([tri[0].0, tri[1].0, tri[2].0], [tri[0].1, tri[1].1, tri[2].1]));
    }

    fn tetrahedron(&mut self, pts: [Lattice; 4]) {
        let vals = pts.map(|p| self.grid.value(&p));
        let (pos, neg): (Vec<usize>, Vec<usize>) = (0..4).partition(|&i| vals[i] > 0.0);
        if pos.is_empty() || neg.is_empty() {
            return;
        }
        let centroid = |ids: &[usize]| {
            ids.iter().map(|&i| self.grid.position(&pts[i])).sum::<Vec3>() / ids.len() as f64
        };
        let toward = centroid(&pos) - centroid(&neg);
        match (pos.len(), neg.len()) {
            (1, 3) | (3, 1) => {
                let (lone, others) = if pos.len() == 1 { (pos[0], &neg) } else { (neg[0], &pos) };
                let tri = [0, 1, 2].map(|k| self.crossing(&pts[lone], &pts[others[k]]));
                self.emit(tri, &toward);
            }
            _ => {
                let e = [
                    self.crossing(&pts[pos[0]], &pts[neg[0]]),
                    self.crossing(&pts[pos[0]], &pts[neg[1]]),
                    self.crossing(&pts[pos[1]], &pts[neg[1]]),
                    self.crossing(&pts[pos[1]], &pts[neg[0]]),
                ];
                if (e[0].1 - e[2].1).norm() <= (e[1].1 - e[3].1).norm() {
                    self.emit([e[0], e[1], e[2]], &toward);
                    self.emit([e[0], e[2], e[3]], &toward);
                } else {
                    self.emit([e[1], e[2], e[3]], &toward);
                    self.emit([e[1], e[3], e[0]], &toward);
                }
            }
        }
    }
}

/// Triangulates `{f = 0}` on an `n³` periodic grid. `f` must have period 2
/// in every coordinate.
pub fn march(f: &(dyn Fn(&Vec3) -> f64 + Sync), n: usize) -> Result<PeriodicSurfaceMesh> {
    use rayon::prelude::*;
    if n < 2 {
        return Err(Error::invalid(format!("grid resolution must be at least 2, got {n}")));
    }
    let l = 2 * n as i64;
    let mut grid = Grid { n, h: PERIOD / n as f64, values: Vec::new(), f };
    grid.values = (0..l * l * l)
        .into_par_iter()
        .map(|idx| {
            let c = [idx / (l * l), (idx / l) % l, idx % l];
            let v = (grid.f)(&grid.position(&c));
            // Rounding noise around exact zeros would break symmetric cases apart.
            if v.abs() < ZERO_SNAP {
                0.0
            } else {
                v
            }
        })
        .collect();

    let mut b = Builder { grid: &grid, vertices: Vec::new(), lookup: HashMap::new(), faces: Vec::new() };
    const CYCLE: [[i64; 2]; 4] = [[0, 0], [2, 0], [2, 2], [0, 2]];
    for i in 0..n as i64 {
        for j in 0..n as i64 {
            for k in 0..n as i64 {
                let base = [2 * i, 2 * j, 2 * k];
                let centre = [base[0] + 1, base[1] + 1, base[2] + 1];
                for axis in 0..3 {
                    let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
                    for side in [0, 2] {
                        let mut face = centre;
                        face[axis] = base[axis] + side;
                        let corner = |q: [i64; 2]| {
                            let mut c = base;
                            c[axis] += side;
                            c[u] += q[0];
                            c[v] += q[1];
                            c
                        };
                        for e in 0..4 {
                            b.tetrahedron([centre, face, corner(CYCLE[e]), corner(CYCLE[(e + 1) % 4])]);
                        }
                    }
                }
            }
        }
    }
    if b.faces.is_empty() {
        return Err(Error::EmptyLevelSet);
    }
    let mesh = PeriodicSurfaceMesh::from_world_faces(b.vertices, b.faces);
    mesh.validate()?;
    Ok(mesh)
}
