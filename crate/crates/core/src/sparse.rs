//! Thin wrappers over faer's sparse factorizations.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::ldlt::factor::{LdltParams, LdltRegularization};
use faer::linalg::solvers::Solve;
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, simplicial::SimplicialLdltRef, supernodal::SupernodalLdltRef, CholeskySymbolicParams,
    SymbolicCholeskyRaw, SymmetricOrdering,
};
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::sparse::{SparseColMat, Triplet};
use faer::{MatMut, Par, Side, Spec};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SparseError {
    #[error("sparse matrix assembly failed: {0}")]
    Assembly(String),
    #[error("factorization failed: {0}")]
    Factorization(String),
}

/// Coordinate-format accumulator; duplicate entries are summed.
#[derive(Debug, Clone, Default)]
pub struct TripletMatrix {
    n: usize,
    entries: Vec<Triplet<usize, usize, f64>>,
}

impl TripletMatrix {
    pub fn new(n: usize) -> Self {
        TripletMatrix {
            n,
            entries: Vec::with_capacity(5 * n),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        self.entries.push(Triplet::new(row, col, val));
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries.iter().map(|t| (t.row, t.col, t.val))
    }

    pub fn build(&self) -> Result<SparseMatrix, SparseError> {
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(self.n, self.n, &self.entries)
            .map_err(|e| SparseError::Assembly(format!("{e:?}")))?;
        Ok(SparseMatrix { mat })
    }
}

#[derive(Debug, Clone)]
pub struct SparseMatrix {
    mat: SparseColMat<usize, f64>,
}

impl SparseMatrix {
    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        let sym = self.mat.symbolic();
        let vals = self.mat.val();
        for j in 0..self.dim() {
            let xj = x[j];
            for idx in sym.col_range(j) {
                y[sym.row_idx()[idx]] += vals[idx] * xj;
            }
        }
        y
    }

    /// Copy of the matrix with `shift[i]` subtracted from each stored
    /// diagonal entry. Every assembled operator stores its full diagonal.
    pub fn minus_diagonal(&self, shift: &[f64]) -> SparseMatrix {
        let mut mat = self.mat.clone();
        let (sym, vals) = mat.parts_mut();
        for j in 0..sym.ncols() {
            for idx in sym.col_range(j) {
                if sym.row_idx()[idx] == j {
                    vals[idx] -= shift[j];
                }
            }
        }
        SparseMatrix { mat }
    }

    pub fn lu(&self) -> Result<LuSolver, SparseError> {
        let lu = self
            .mat
            .sp_lu()
            .map_err(|e| SparseError::Factorization(format!("{e:?}")))?;
        Ok(LuSolver { lu })
    }

    pub fn cholesky(&self) -> Result<CholeskySolver, SparseError> {
        let llt = self
            .mat
            .sp_cholesky(Side::Lower)
            .map_err(|e| SparseError::Factorization(format!("{e:?}")))?;
        Ok(CholeskySolver { llt })
    }

    /// Number of negative pivots in an `LDL^T` factorization of this
    /// symmetric matrix. By Sylvester's law of inertia this is the number
    /// of negative eigenvalues.
    pub fn negative_inertia(&self) -> Result<usize, SparseError> {
        let symbolic = factorize_symbolic_cholesky(
            self.mat.symbolic(),
            Side::Lower,
            SymmetricOrdering::Amd,
            CholeskySymbolicParams::default(),
        )
        .map_err(|e| SparseError::Factorization(format!("{e:?}")))?;
        let mut values = vec![0.0f64; symbolic.len_val()];
        let par = Par::Seq;
        let params: Spec<LdltParams, f64> = Default::default();
        let mut buffer = MemBuffer::try_new(symbolic.factorize_numeric_ldlt_scratch::<f64>(par, params))
            .map_err(|e| SparseError::Factorization(format!("{e:?}")))?;
        symbolic
            .factorize_numeric_ldlt(
                &mut values,
                self.mat.as_ref(),
                Side::Lower,
                LdltRegularization::default(),
                par,
                MemStack::new(&mut buffer),
                params,
            )
            .map_err(|e| SparseError::Factorization(format!("{e:?}")))?;
        let mut negative = 0usize;
        match symbolic.raw() {
            SymbolicCholeskyRaw::Supernodal(sym) => {
                let ldlt = SupernodalLdltRef::new(sym, &values);
                for s in 0..sym.n_supernodes() {
                    let block = ldlt.supernode(s).val();
                    for k in 0..block.ncols() {
                        let d = block[(k, k)];
                        if !d.is_finite() || d == 0.0 {
                            return Err(SparseError::Factorization("zero pivot in LDL^T".into()));
                        }
                        if d < 0.0 {
                            negative += 1;
                        }
                    }
                }
            }
            SymbolicCholeskyRaw::Simplicial(sym) => {
                let ldlt = SimplicialLdltRef::new(sym, &values);
                let factor = ldlt.symbolic().factor();
                let vals = ldlt.values();
                for j in 0..factor.ncols() {
                    for idx in factor.col_range(j) {
                        if factor.row_idx()[idx] == j {
                            let d = vals[idx];
                            if !d.is_finite() || d == 0.0 {
                                return Err(SparseError::Factorization("zero pivot in LDL^T".into()));
                            }
                            if d < 0.0 {
                                negative += 1;
                            }
                        }
                    }
                }
            }
        }
        Ok(negative)
    }
}

pub struct LuSolver {
    lu: Lu<usize, f64>,
}

impl LuSolver {
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        self.lu.solve_in_place(MatMut::from_column_major_slice_mut(rhs, n, 1));
    }
}

pub struct CholeskySolver {
    llt: Llt<usize, f64>,
}

impl CholeskySolver {
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        self.llt.solve_in_place(MatMut::from_column_major_slice_mut(rhs, n, 1));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize, shift: f64) -> TripletMatrix {
        let mut t = TripletMatrix::new(n);
        for i in 0..n {
            t.push(i, i, 2.0 - shift);
            if i > 0 {
                t.push(i, i - 1, -1.0);
            }
            if i + 1 < n {
                t.push(i, i + 1, -1.0);
            }
        }
        t
    }

    #[test]
    fn lu_and_cholesky_solve() {
        let a = laplacian_1d(50, 0.0).build().unwrap();
        let x_true: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.mul_vec(&x_true);
        let mut x = b.clone();
        a.lu().unwrap().solve_in_place(&mut x);
        let mut y = b;
        a.cholesky().unwrap().solve_in_place(&mut y);
        for i in 0..50 {
            assert!((x[i] - x_true[i]).abs() < 1e-10);
            assert!((y[i] - x_true[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn inertia_counts_eigenvalues_below_shift() {
        // eigenvalues of tridiag(-1, 2, -1) of size n: 2 - 2 cos(k pi/(n+1))
        let n = 40;
        let eig: Vec<f64> = (1..=n)
            .map(|k| 2.0 - 2.0 * (k as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos())
            .collect();
        for shift in [0.05, 0.5, 1.3, 2.7, 3.9] {
            let expected = eig.iter().filter(|&&e| e < shift).count();
            let a = laplacian_1d(n, shift).build().unwrap();
            assert_eq!(a.negative_inertia().unwrap(), expected, "shift {shift}");
        }
    }

    #[test]
    fn diagonal_shift() {
        let a = laplacian_1d(5, 0.0).build().unwrap();
        let b = a.minus_diagonal(&[1.0; 5]);
        let y = b.mul_vec(&[1.0; 5]);
        assert_eq!(y, vec![0.0, -1.0, -1.0, -1.0, 0.0]);
    }
}
