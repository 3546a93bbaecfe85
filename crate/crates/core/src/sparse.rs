//! Compressed sparse row matrices and direct solvers.
//!
//! Every assembled operator in the crate (pressure, advection, conduction,
//! restriction, prolongation) is a [`SparseMatrix`]. Factorizations are
//! delegated to `faer`.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Assembles a matrix from `(row, col, value)` triplets. Duplicates are
    /// summed in input order, so the result is reproducible bit for bit.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&k| (triplets[k].0, triplets[k].1));

        let mut indptr = vec![0; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for k in order {
            let (i, j, v) = triplets[k];
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) out of bounds");
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(j);
                values.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        Self { nrows, ncols, indptr, indices, values }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, indptr: vec![0; nrows + 1], indices: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self { nrows: n, ncols: n, indptr: (0..=n).collect(), indices: (0..n).collect(), values: diag.to_vec() }
    }

    /// Builds a matrix from dense rows, dropping exact zeros.
    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut t = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), ncols, "ragged dense matrix");
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(nrows, ncols, &t)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.indptr[i]..self.indptr[i + 1];
        self.indices[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    /// Iterates all stored entries as `(row, col, value)`.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.indptr[i]..self.indptr[i + 1];
        match self.indices[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "dimension mismatch in mat-vec");
        (0..self.nrows).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    /// `y = Aᵀ x`
    pub fn mul_vec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows, "dimension mismatch in transposed mat-vec");
        let mut y = vec![0.0; self.ncols];
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                y[j] += v * x[i];
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &j in &self.indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                let k = next[j];
                indices[k] = i;
                values[k] = v;
                next[j] += 1;
            }
        }
        Self { nrows: self.ncols, ncols: self.nrows, indptr, indices, values }
    }

    /// Sparse product `self * rhs` (row-wise Gustavson).
    pub fn matmul(&self, rhs: &SparseMatrix) -> Self {
        assert_eq!(self.ncols, rhs.nrows, "dimension mismatch in sparse product");
        let mut acc = vec![0.0; rhs.ncols];
        let mut marker = vec![usize::MAX; rhs.ncols];
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        let mut pattern = Vec::new();
        for i in 0..self.nrows {
            pattern.clear();
            for (k, a) in self.row(i) {
                for (j, b) in rhs.row(k) {
                    if marker[j] != i {
                        marker[j] = i;
                        acc[j] = 0.0;
                        pattern.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            pattern.sort_unstable();
            for &j in &pattern {
                indices.push(j);
                values.push(acc[j]);
            }
            indptr.push(indices.len());
        }
        Self { nrows: self.nrows, ncols: rhs.ncols, indptr, indices, values }
    }

    /// `alpha * self + beta * other`
    pub fn axpby(&self, alpha: f64, other: &SparseMatrix, beta: f64) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols), "shape mismatch");
        let mut t: Vec<(usize, usize, f64)> = Vec::with_capacity(self.nnz() + other.nnz());
        t.extend(self.triplets().map(|(i, j, v)| (i, j, alpha * v)));
        t.extend(other.triplets().map(|(i, j, v)| (i, j, beta * v)));
        Self::from_triplets(self.nrows, self.ncols, &t)
    }

    pub fn add(&self, other: &SparseMatrix) -> Self {
        self.axpby(1.0, other, 1.0)
    }

    /// Adds `diag` to the main diagonal.
    pub fn add_diagonal(&self, diag: &[f64]) -> Self {
        assert_eq!(diag.len(), self.nrows);
        self.add(&Self::from_diagonal(diag))
    }

    /// Multiplies row `i` by `scale[i]`.
    pub fn scale_rows(&self, scale: &[f64]) -> Self {
        assert_eq!(scale.len(), self.nrows);
        let mut out = self.clone();
        for i in 0..self.nrows {
            for k in out.indptr[i]..out.indptr[i + 1] {
                out.values[k] *= scale[i];
            }
        }
        out
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows).map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        self.mul_vec_transpose(&vec![1.0; self.nrows])
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn max_asymmetry(&self) -> f64 {
        if self.nrows != self.ncols {
            return f64::INFINITY;
        }
        self.triplets().map(|(i, j, v)| (v - self.get(j, i)).abs()).fold(0.0, f64::max)
    }

    /// Keeps rows listed in `rows` and columns listed in `cols`, in that order.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (new, &old) in cols.iter().enumerate() {
            col_map[old] = new;
        }
        let mut t = Vec::new();
        for (new_i, &i) in rows.iter().enumerate() {
            for (j, v) in self.row(i) {
                if col_map[j] != usize::MAX {
                    t.push((new_i, col_map[j], v));
                }
            }
        }
        Self::from_triplets(rows.len(), cols.len(), &t)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, j, v) in self.triplets() {
            d[i][j] += v;
        }
        d
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let t: Vec<Triplet<usize, usize, f64>> = self.triplets().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &t)
            .map_err(|e| Error::Solver(format!("matrix conversion failed: {e:?}")))
    }
}

enum Factor {
    Lu(Box<Lu<usize, f64>>),
    Cholesky(Llt<usize, f64>),
}

/// A factorized square matrix.
pub struct DirectSolver {
    factor: Factor,
    matrix: SparseMatrix,
    norm_inf: f64,
}

impl std::fmt::Debug for DirectSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.factor {
            Factor::Lu(_) => "lu",
            Factor::Cholesky(_) => "cholesky",
        };
        f.debug_struct("DirectSolver")
            .field("kind", &kind)
            .field("n", &self.matrix.nrows)
            .field("nnz", &self.matrix.nnz())
            .finish()
    }
}

fn diagnostics(a: &SparseMatrix) -> String {
    let diag = a.diagonal();
    let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
    let max = diag.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    format!("n={}, nnz={}, diag range [{min:e}, {max:e}]", a.nrows, a.nnz())
}

impl DirectSolver {
    /// LU with partial pivoting, for general square matrices.
    pub fn lu(a: &SparseMatrix) -> Result<Self> {
        Self::check_square(a)?;
        let lu = a
            .to_faer()?
            .sp_lu()
            .map_err(|e| Error::Solver(format!("LU factorization failed ({e:?}); {}", diagnostics(a))))?;
        Ok(Self { factor: Factor::Lu(Box::new(lu)), matrix: a.clone(), norm_inf: a.norm_inf() })
    }

    /// Cholesky for symmetric positive definite matrices.
    pub fn cholesky(a: &SparseMatrix) -> Result<Self> {
        Self::check_square(a)?;
        let llt = a
            .to_faer()?
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::Solver(format!("Cholesky factorization failed ({e:?}); {}", diagnostics(a))))?;
        Ok(Self { factor: Factor::Cholesky(llt), matrix: a.clone(), norm_inf: a.norm_inf() })
    }

    fn check_square(a: &SparseMatrix) -> Result<()> {
        if a.nrows != a.ncols {
            return Err(Error::Solver(format!("matrix is {}x{}, not square", a.nrows, a.ncols)));
        }
        Ok(())
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    fn raw_solve(&self, b: &[f64]) -> Vec<f64> {
        let mut rhs = Mat::<f64>::from_fn(b.len(), 1, |i, _| b[i]);
        match &self.factor {
            Factor::Lu(lu) => lu.solve_in_place(rhs.as_mut()),
            Factor::Cholesky(llt) => llt.solve_in_place(rhs.as_mut()),
        }
        (0..b.len()).map(|i| rhs[(i, 0)]).collect()
    }

    /// Solves `A x = b` with up to three steps of iterative refinement.
    /// Returns the solution and its normwise backward error
    /// `‖Ax-b‖∞ / (‖A‖∞ ‖x‖∞ + ‖b‖∞)`.
    pub fn solve(&self, b: &[f64]) -> (Vec<f64>, f64) {
        let norm_a = self.norm_inf;
        let norm_b = inf_norm(b);
        let scale = |x: &[f64]| (norm_a * inf_norm(x) + norm_b).max(f64::MIN_POSITIVE);
        let mut x = self.raw_solve(b);
        let mut rel = f64::INFINITY;
        for _ in 0..4 {
            let ax = self.matrix.mul_vec(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            let new_rel = inf_norm(&r) / scale(&x);
            if new_rel >= rel {
                break;
            }
            rel = new_rel;
            if rel <= 1e-14 {
                break;
            }
            let dx = self.raw_solve(&r);
            let candidate: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + d).collect();
            let ac = self.matrix.mul_vec(&candidate);
            let rc = b.iter().zip(&ac).map(|(bi, ai)| (bi - ai).abs()).fold(0.0, f64::max) / scale(&candidate);
            if rc < rel {
                x = candidate;
            } else {
                break;
            }
        }
        (x, rel)
    }

    /// Like [`DirectSolver::solve`] but fails when the residual exceeds `tol`.
    pub fn solve_checked(&self, b: &[f64], tol: f64) -> Result<Vec<f64>> {
        let (x, rel) = self.solve(b);
        if rel > tol || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver(format!(
                "backward error {rel:e} exceeds {tol:e}; {}",
                diagnostics(&self.matrix)
            )));
        }
        Ok(x)
    }
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
