//! Linear solver for the Dirichlet systems.
//!
//! The stiffness matrix does not depend on the level function or the control,
//! so it is factorized once per mesh and the factorization is reused by every
//! solve in a run. Moderate problems go through a sparse Cholesky
//! factorization; above [`DIRECT_LIMIT`] unknowns a Jacobi-preconditioned
//! conjugate gradient iteration takes over.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

/// Unknown count above which the solver switches from a direct
/// factorization to preconditioned CG.
pub const DIRECT_LIMIT: usize = 200_000;

/// Relative tolerance of the CG fallback.
pub const CG_TOLERANCE: f64 = 1e-10;

pub struct DirichletSolver {
    n: usize,
    backend: Backend,
}

enum Backend {
    Direct(faer::sparse::linalg::solvers::Llt<usize, f64>),
    ConjugateGradient { matrix: CsrMatrix, diag_inv: Vec<f64> },
}

impl DirichletSolver {
    /// Factorize a symmetric positive definite matrix.
    pub fn new(k: &CsrMatrix) -> Result<Self> {
        let n = k.nrows();
        assert_eq!(n, k.ncols());
        if n <= DIRECT_LIMIT {
            let trips: Vec<Triplet<usize, usize, f64>> =
                k.entries().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
            let mat = SparseColMat::try_new_from_triplets(n, n, &trips)
                .map_err(|e| Error::invalid(format!("sparse matrix build failed: {e:?}")))?;
            let llt = mat
                .sp_cholesky(faer::Side::Lower)
                .map_err(|_| Error::SolverFailure { residual: f64::NAN })?;
            Ok(DirichletSolver { n, backend: Backend::Direct(llt) })
        } else {
            let diag = k.diagonal();
            if diag.iter().any(|&d| d <= 0.0) {
                return Err(Error::SolverFailure { residual: f64::NAN });
            }
            let diag_inv = diag.iter().map(|&d| 1.0 / d).collect();
            Ok(DirichletSolver {
                n,
                backend: Backend::ConjugateGradient { matrix: k.clone(), diag_inv },
            })
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(rhs.len(), self.n);
        match &self.backend {
            Backend::Direct(llt) => {
                let b = Mat::from_fn(self.n, 1, |i, _| rhs[i]);
                let x = llt.solve(&b);
                Ok((0..self.n).map(|i| x[(i, 0)]).collect())
            }
            Backend::ConjugateGradient { matrix, diag_inv } => {
                cg_jacobi(matrix, diag_inv, rhs)
            }
        }
    }
}

fn cg_jacobi(a: &CsrMatrix, diag_inv: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let norm_b = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm_b == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(diag_inv).map(|(&ri, &di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(&a, &b)| a * b).sum();
    let max_iters = 40 * n;
    for _ in 0..max_iters {
        let ap = a.matvec(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(&a, &b)| a * b).sum();
        if pap <= 0.0 {
            return Err(Error::SolverFailure { residual: f64::NAN });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let norm_r = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm_r <= CG_TOLERANCE * norm_b {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * diag_inv[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(&a, &b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let norm_r = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    Err(Error::SolverFailure { residual: norm_r / norm_b })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> CsrMatrix {
        let mut trips = Vec::new();
        for i in 0..n {
            trips.push((i as u32, i as u32, 2.0));
            if i > 0 {
                trips.push((i as u32, i as u32 - 1, -1.0));
            }
            if i + 1 < n {
                trips.push((i as u32, i as u32 + 1, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, trips)
    }

    #[test]
    fn direct_solve_recovers_known_solution() {
        let n = 50;
        let a = laplacian_1d(n);
        let x_true: Vec<f64> = (0..n).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let b = a.matvec(&x_true);
        let solver = DirichletSolver::new(&a).unwrap();
        let x = solver.solve(&b).unwrap();
        for i in 0..n {
            assert!((x[i] - x_true[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn cg_solve_matches_direct() {
        let n = 80;
        let a = laplacian_1d(n);
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let b = a.matvec(&x_true);
        // exercise the CG path directly
        let diag_inv: Vec<f64> = a.diagonal().iter().map(|d| 1.0 / d).collect();
        let x = cg_jacobi(&a, &diag_inv, &b).unwrap();
        for i in 0..n {
            assert!((x[i] - x_true[i]).abs() < 1e-7, "{} vs {}", x[i], x_true[i]);
        }
    }
}
