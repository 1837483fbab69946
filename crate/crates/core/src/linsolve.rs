//! Symmetric positive definite solves for the state and adjoint systems.
//!
//! Small and medium systems use an envelope (profile) Cholesky factorization
//! after reverse Cuthill–McKee reordering; larger ones fall back to
//! Jacobi-preconditioned conjugate gradients.

use std::collections::VecDeque;

use serde::Serialize;
use thiserror::Error;

use crate::sparse::SparseMatrix;

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DIRECT_LIMIT: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    Cholesky,
    Cg,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// Relative residual `‖Ax − b‖₂ / ‖b‖₂` (absolute when `b = 0`).
    pub residual_norm: f64,
    pub method: SolveMethod,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("matrix is {0}x{1}, expected square")]
    NotSquare(usize, usize),
    #[error("right-hand side has length {got}, matrix has {expected} rows")]
    Dimension { expected: usize, got: usize },
    #[error("matrix is not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("CG did not converge in {} iterations (residual {:e})", .0.iterations, .0.residual_norm)]
    NotConverged(SolveReport),
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn relative_residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> (Vec<f64>, f64) {
    let ax = a.mul_vec(x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
    let bn = norm(b);
    let rn = norm(&r);
    (r, if bn > 0.0 { rn / bn } else { rn })
}

/// Reverse Cuthill–McKee ordering of the symmetric pattern of `a`.
/// Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &SparseMatrix) -> Vec<usize> {
    let n = a.nrows();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| a.row(i).0.iter().copied().filter(|&j| j != i).collect())
        .collect();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();

    let bfs_levels = |start: usize, mask: &[bool]| -> Vec<Vec<usize>> {
        let mut seen = vec![false; n];
        seen[start] = true;
        let mut levels = vec![vec![start]];
        loop {
            let mut next = Vec::new();
            for &u in levels.last().unwrap() {
                for &v in &adj[u] {
                    if !seen[v] && !mask[v] {
                        seen[v] = true;
                        next.push(v);
                    }
                }
            }
            if next.is_empty() {
                return levels;
            }
            levels.push(next);
        }
    };

    let mut placed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let mut start = (0..n)
            .filter(|&i| !placed[i])
            .min_by_key(|&i| (degree[i], i))
            .unwrap();
        // pseudo-peripheral start node
        let mut depth = bfs_levels(start, &placed).len();
        for _ in 0..8 {
            let levels = bfs_levels(start, &placed);
            let cand = *levels
                .last()
                .unwrap()
                .iter()
                .min_by_key(|&&i| (degree[i], i))
                .unwrap();
            let d = bfs_levels(cand, &placed).len();
            if d > depth {
                depth = d;
                start = cand;
            } else {
                break;
            }
        }
        let mut queue = VecDeque::from([start]);
        placed[start] = true;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            let mut nbrs: Vec<usize> = adj[u].iter().copied().filter(|&v| !placed[v]).collect();
            nbrs.sort_unstable_by_key(|&v| (degree[v], v));
            for v in nbrs {
                placed[v] = true;
                queue.push_back(v);
            }
        }
    }
    order.reverse();
    order
}

/// Envelope Cholesky factor `P A Pᵀ = L Lᵀ`, rows of `L` stored from their
/// first nonzero column to the diagonal.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    perm: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    pub fn factor(a: &SparseMatrix) -> Result<Self, SolveError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(SolveError::NotSquare(n, a.ncols()));
        }
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (new, &old) in perm.iter().enumerate() {
            for &j in a.row(old).0 {
                let jn = inv[j];
                if jn < new {
                    first[new] = first[new].min(jn);
                }
            }
        }
        let mut start = Vec::with_capacity(n + 1);
        let mut total = 0;
        for i in 0..n {
            start.push(total);
            total += i - first[i] + 1;
        }
        start.push(total);
        let mut data = vec![0.0; total];
        for (new, &old) in perm.iter().enumerate() {
            let (cols, vals) = a.row(old);
            for (&j, &v) in cols.iter().zip(vals) {
                let jn = inv[j];
                if jn <= new {
                    data[start[new] + jn - first[new]] = v;
                }
            }
        }

        for i in 0..n {
            let fi = first[i];
            let (before, rest) = data.split_at_mut(start[i]);
            let row_i = &mut rest[..i - fi + 1];
            for j in fi..i {
                let fj = first[j];
                let row_j = &before[start[j]..start[j] + j - fj + 1];
                let k0 = fi.max(fj);
                let s = dot(&row_i[k0 - fi..j - fi], &row_j[k0 - fj..j - fj]);
                row_i[j - fi] = (row_i[j - fi] - s) / row_j[j - fj];
            }
            let d = row_i[i - fi] - dot(&row_i[..i - fi], &row_i[..i - fi]);
            if !(d > 0.0) || !d.is_finite() {
                return Err(SolveError::NotPositiveDefinite {
                    row: perm[i],
                    pivot: d,
                });
            }
            row_i[i - fi] = d.sqrt();
        }
        Ok(Self {
            perm,
            first,
            start,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Number of stored entries of `L`.
    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let s = dot(&row[..i - fi], &y[fi..i]);
            y[i] = (y[i] - s) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            y[i] /= row[i - fi];
            let xi = y[i];
            for (yk, l) in y[fi..i].iter_mut().zip(&row[..i - fi]) {
                *yk -= l * xi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

/// Jacobi-preconditioned conjugate gradients.
pub fn pcg(
    a: &SparseMatrix,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveReport), SolveError> {
    let n = b.len();
    let diag = a.diagonal();
    if let Some(row) = diag.iter().position(|&d| !(d > 0.0)) {
        return Err(SolveError::NotPositiveDefinite { row, pivot: diag[row] });
    }
    let bn = norm(b);
    let mut x = vec![0.0; n];
    if bn == 0.0 {
        return Ok((
            x,
            SolveReport {
                iterations: 0,
                residual_norm: 0.0,
                method: SolveMethod::Cg,
            },
        ));
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        let ap = a.mul_vec(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(SolveError::NotPositiveDefinite { row: it, pivot: pap });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rel = norm(&r) / bn;
        if rel <= tol {
            let (_, true_rel) = relative_residual(a, &x, b);
            return Ok((
                x,
                SolveReport {
                    iterations: it,
                    residual_norm: true_rel,
                    method: SolveMethod::Cg,
                },
            ));
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let (_, rel) = relative_residual(a, &x, b);
    Err(SolveError::NotConverged(SolveReport {
        iterations: max_iter,
        residual_norm: rel,
        method: SolveMethod::Cg,
    }))
}

/// A prepared SPD solver that can be reused across right-hand sides.
#[derive(Debug, Clone)]
pub struct SpdSolver {
    matrix: SparseMatrix,
    factor: Option<EnvelopeCholesky>,
    tol: f64,
}

impl SpdSolver {
    pub fn new(matrix: SparseMatrix, tol: f64) -> Result<Self, SolveError> {
        Self::with_direct_limit(matrix, tol, DIRECT_LIMIT)
    }

    pub fn with_direct_limit(matrix: SparseMatrix, tol: f64, direct_limit: usize) -> Result<Self, SolveError> {
        if !(tol > 0.0) {
            return Err(SolveError::BadTolerance(tol));
        }
        if matrix.nrows() != matrix.ncols() {
            return Err(SolveError::NotSquare(matrix.nrows(), matrix.ncols()));
        }
        let factor = if matrix.nrows() <= direct_limit {
            Some(EnvelopeCholesky::factor(&matrix)?)
        } else {
            None
        };
        Ok(Self { matrix, factor, tol })
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn method(&self) -> SolveMethod {
        if self.factor.is_some() {
            SolveMethod::Cholesky
        } else {
            SolveMethod::Cg
        }
    }

    pub fn solve(&self, b: &[f64]) -> Result<(Vec<f64>, SolveReport), SolveError> {
        if b.len() != self.matrix.nrows() {
            return Err(SolveError::Dimension {
                expected: self.matrix.nrows(),
                got: b.len(),
            });
        }
        let Some(factor) = &self.factor else {
            return pcg(&self.matrix, b, self.tol, 20 * b.len().max(100));
        };
        let mut x = factor.solve(b);
        let (mut r, mut rel) = relative_residual(&self.matrix, &x, b);
        let mut iterations = 1;
        // up to two steps of iterative refinement
        while rel > self.tol && iterations < 3 {
            let dx = factor.solve(&r);
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
            let (r2, rel2) = relative_residual(&self.matrix, &trial, b);
            iterations += 1;
            if rel2 >= rel {
                break;
            }
            x = trial;
            r = r2;
            rel = rel2;
        }
        Ok((
            x,
            SolveReport {
                iterations,
                residual_norm: rel,
                method: SolveMethod::Cholesky,
            },
        ))
    }
}

/// Solves `A x = b` for symmetric positive definite `A`.
pub fn solve_spd(a: &SparseMatrix, b: &[f64], tol: f64) -> Result<(Vec<f64>, SolveReport), SolveError> {
    SpdSolver::new(a.clone(), tol)?.solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};

    fn random_spd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        a.transpose() * &a + DMatrix::identity(n, n)
    }

    // dense Gaussian elimination with partial pivoting
    fn gauss_solve(mut a: DMatrix<f64>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| a[(i, k)].abs().total_cmp(&a[(j, k)].abs())).unwrap();
            a.swap_rows(k, p);
            b.swap(k, p);
            for i in k + 1..n {
                let f = a[(i, k)] / a[(k, k)];
                for j in k..n {
                    a[(i, j)] -= f * a[(k, j)];
                }
                b[i] -= f * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| a[(i, j)] * x[j]).sum();
            x[i] = (b[i] - s) / a[(i, i)];
        }
        x
    }

    #[test]
    fn diagonal_system() {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1.0, 1.0]));
        let (x, rep) = solve_spd(&SparseMatrix::from_dense(&d), &[3.0, -1.5, 7.0], DEFAULT_TOL).unwrap();
        assert_eq!(x, vec![3.0, -1.5, 7.0]);
        assert_eq!(rep.method, SolveMethod::Cholesky);
    }

    #[test]
    fn two_by_two() {
        let a = SparseMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]));
        let (x, _) = solve_spd(&a, &[3.0, 3.0], DEFAULT_TOL).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn random_spd_matches_dense_elimination() {
        let dense = random_spd(50, 7);
        let a = SparseMatrix::from_dense(&dense);
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        let b: Vec<f64> = (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let oracle = gauss_solve(dense, b.clone());
        let on = norm(&oracle);
        for direct_limit in [usize::MAX, 0] {
            let s = SpdSolver::with_direct_limit(a.clone(), DEFAULT_TOL, direct_limit).unwrap();
            let (x, rep) = s.solve(&b).unwrap();
            let err: Vec<f64> = x.iter().zip(&oracle).map(|(a, b)| a - b).collect();
            assert!(norm(&err) / on < 1e-10, "{:?}", rep.method);
            assert!(rep.residual_norm <= DEFAULT_TOL);
        }
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let a = SparseMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]));
        assert!(matches!(
            solve_spd(&a, &[1.0, 1.0], DEFAULT_TOL),
            Err(SolveError::NotPositiveDefinite { .. })
        ));
        let s = SpdSolver::with_direct_limit(a, DEFAULT_TOL, 0).unwrap();
        assert!(matches!(s.solve(&[1.0, 0.0]), Err(SolveError::NotPositiveDefinite { .. })));
    }

    #[test]
    fn iteration_cap_reports() {
        let dense = random_spd(30, 3);
        let a = SparseMatrix::from_dense(&dense);
        let b = vec![1.0; 30];
        match pcg(&a, &b, 1e-14, 2) {
            Err(SolveError::NotConverged(rep)) => assert_eq!(rep.iterations, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn repeated_solves_are_bitwise_identical() {
        let a = SparseMatrix::from_dense(&random_spd(40, 5));
        let b: Vec<f64> = (0..40).map(|i| (i as f64).sin()).collect();
        let (x1, _) = solve_spd(&a, &b, DEFAULT_TOL).unwrap();
        let (x2, _) = solve_spd(&a, &b, DEFAULT_TOL).unwrap();
        assert_eq!(x1, x2);
    }

    #[test]
    fn rcm_is_a_permutation() {
        let a = SparseMatrix::from_dense(&random_spd(25, 1));
        let mut p = reverse_cuthill_mckee(&a);
        p.sort_unstable();
        assert_eq!(p, (0..25).collect::<Vec<_>>());
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = SparseMatrix::from_dense(&random_spd(10, 2));
        let (x, rep) = solve_spd(&a, &[0.0; 10], DEFAULT_TOL).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
        assert_eq!(rep.residual_norm, 0.0);
    }
}
