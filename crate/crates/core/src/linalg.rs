//! Sparse symmetric solves backed by faer's supernodal Cholesky.

use faer::sparse::{SparseColMat, Triplet};
use faer::{Col, Side};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("right-hand side is incompatible with the nullspace (relative sum {0:e})")]
    Incompatible(f64),
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("solver did not converge (relative residual {0:e})")]
    NotConverged(f64),
    #[error("matrix assembly failed: {0}")]
    Assembly(String),
}

pub type SparseMatrix = SparseColMat<usize, f64>;

/// Builds an `n x n` matrix, summing duplicate entries.
pub fn assemble(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<SparseMatrix, SolveError> {
    triplets.sort_unstable_by_key(|&(r, c, _)| (c, r));
    let mut merged: Vec<Triplet<usize, usize, f64>> = Vec::with_capacity(triplets.len());
    for (r, c, v) in triplets {
        match merged.last_mut() {
            Some(t) if t.row == r && t.col == c => t.val += v,
            _ => merged.push(Triplet::new(r, c, v)),
        }
    }
    SparseColMat::try_new_from_triplets(n, n, &merged).map_err(|e| SolveError::Assembly(format!("{e:?}")))
}

pub fn matvec(a: &SparseMatrix, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; a.nrows()];
    let a = a.as_ref();
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        for (i, v) in a.row_idx_of_col(j).zip(a.val_of_col(j)) {
            y[i] += v * xj;
        }
    }
    y
}

/// `a + alpha * b` for matrices that share the assembled diagonal structure.
pub fn add_scaled(a: &SparseMatrix, alpha: f64, b: &SparseMatrix) -> Result<SparseMatrix, SolveError> {
    let mut t = Vec::with_capacity(a.compute_nnz() + b.compute_nnz());
    for (m, s) in [(a, 1.0), (b, alpha)] {
        let r = m.as_ref();
        for j in 0..m.ncols() {
            for (i, v) in r.row_idx_of_col(j).zip(r.val_of_col(j)) {
                t.push((i, j, s * v));
            }
        }
    }
    assemble(a.nrows(), t)
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Cholesky factorization of a symmetric positive definite matrix.
pub struct SpdSolver {
    llt: faer::sparse::linalg::solvers::Llt<usize, f64>,
    n: usize,
}

impl SpdSolver {
    pub fn new(a: &SparseMatrix) -> Result<Self, SolveError> {
        let llt = a.sp_cholesky(Side::Lower).map_err(|e| SolveError::Factorization(format!("{e:?}")))?;
        Ok(Self { llt, n: a.nrows() })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        use faer::linalg::solvers::Solve;
        let rhs = Col::<f64>::from_fn(self.n, |i| b[i]);
        let x = self.llt.solve(&rhs);
        (0..self.n).map(|i| x[i]).collect()
    }
}

/// Solver for the singular stiffness system `S u = b` on a closed surface.
///
/// `S` has the constants as its nullspace. The right-hand side is projected
/// to zero sum, the shifted matrix `S + δM` is factorized, and iterative
/// refinement against `S` removes the shift. The returned solution has
/// zero mass-weighted mean.
pub struct StiffnessSolver {
    stiffness: SparseMatrix,
    mass: Vec<f64>,
    factor: SpdSolver,
}

/// Solution of a stiffness solve with its achieved relative residual.
#[derive(Debug, Clone)]
pub struct StiffnessSolution {
    pub u: Vec<f64>,
    pub residual: f64,
}

const NULLSPACE_SHIFT: f64 = 1e-6;
const COMPATIBILITY_TOL: f64 = 1e-8;
const TARGET_RESIDUAL: f64 = 1e-13;
const MAX_RESIDUAL: f64 = 1e-10;

impl StiffnessSolver {
    pub fn new(stiffness: &SparseMatrix, mass: &[f64]) -> Result<Self, SolveError> {
        let n = stiffness.nrows();
        let m = assemble(n, mass.iter().enumerate().map(|(i, &a)| (i, i, a)).collect())?;
        let shifted = add_scaled(stiffness, NULLSPACE_SHIFT, &m)?;
        let factor = SpdSolver::new(&shifted)?;
        Ok(Self { stiffness: stiffness.clone(), mass: mass.to_vec(), factor })
    }

    pub fn solve(&self, b: &[f64]) -> Result<StiffnessSolution, SolveError> {
        let n = b.len();
        let scale: f64 = b.iter().map(|x| x.abs()).sum();
        if scale == 0.0 {
            return Ok(StiffnessSolution { u: vec![0.0; n], residual: 0.0 });
        }
        let sum: f64 = b.iter().sum();
        if sum.abs() > COMPATIBILITY_TOL * scale {
            return Err(SolveError::Incompatible(sum / scale));
        }
        let mean = sum / n as f64;
        let b: Vec<f64> = b.iter().map(|x| x - mean).collect();
        let bnorm = norm(&b);

        let mut u = self.factor.solve(&b);
        let mut residual = f64::INFINITY;
        for _ in 0..20 {
            let su = matvec(&self.stiffness, &u);
            let r: Vec<f64> = b.iter().zip(&su).map(|(bi, si)| bi - si).collect();
            residual = norm(&r) / bnorm;
            if residual <= TARGET_RESIDUAL {
                break;
            }
            let du = self.factor.solve(&r);
            for (ui, di) in u.iter_mut().zip(&du) {
                *ui += di;
            }
        }
        if !(residual <= MAX_RESIDUAL) {
            return Err(SolveError::NotConverged(residual));
        }
        let total_mass: f64 = self.mass.iter().sum();
        let shift = u.iter().zip(&self.mass).map(|(a, m)| a * m).sum::<f64>() / total_mass;
        for ui in u.iter_mut() {
            *ui -= shift;
        }
        Ok(StiffnessSolution { u, residual })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring_laplacian(n: usize) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            let j = (i + 1) % n;
            t.extend([(i, i, 1.0), (j, j, 1.0), (i, j, -1.0), (j, i, -1.0)]);
        }
        assemble(n, t).unwrap()
    }

    #[test]
    fn assemble_sums_duplicates() {
        let a = assemble(2, vec![(0, 0, 1.0), (0, 0, 2.0), (1, 0, 1.0)]).unwrap();
        assert_eq!(matvec(&a, &[1.0, 0.0]), vec![3.0, 1.0]);
    }

    #[test]
    fn singular_ring_solve() {
        let n = 64;
        let s = ring_laplacian(n);
        let solver = StiffnessSolver::new(&s, &vec![1.0 / n as f64; n]).unwrap();
        let w: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let wm = w.iter().sum::<f64>() / n as f64;
        let w: Vec<f64> = w.iter().map(|x| x - wm).collect();
        let b = matvec(&s, &w);
        let sol = solver.solve(&b).unwrap();
        assert!(sol.residual < 1e-12);
        for (a, b) in sol.u.iter().zip(&w) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn incompatible_rhs_is_rejected() {
        let s = ring_laplacian(8);
        let solver = StiffnessSolver::new(&s, &[0.125; 8]).unwrap();
        assert!(matches!(solver.solve(&[1.0; 8]), Err(SolveError::Incompatible(_))));
        assert_eq!(solver.solve(&[0.0; 8]).unwrap().u, vec![0.0; 8]);
    }
}
