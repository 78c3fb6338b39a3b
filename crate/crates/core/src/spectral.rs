//! Dense symmetric-matrix helpers: eigendecompositions, spectral functions
//! (`exp`, `log`, `| |`), and the operator trait the randomized
//! matrix-exponential machinery is generic over.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Matrix-vector access to a symmetric operator. The block form exists so
/// polynomial evaluation over many sketch vectors can go through one GEMM
/// per term.
pub trait SymOp {
    fn dim(&self) -> usize;
    fn apply(&self, v: &DVector<f64>) -> DVector<f64>;
    fn apply_block(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim(), m.ncols());
        for (j, col) in m.column_iter().enumerate() {
            out.set_column(j, &self.apply(&col.clone_owned()));
        }
        out
    }
}

impl SymOp for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self * v
    }

    fn apply_block(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        self * m
    }
}

/// Diagonal operator; `apply` is O(d).
pub struct DiagOp(pub Vec<f64>);

impl SymOp for DiagOp {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.0.len(), self.0.iter().zip(v.iter()).map(|(d, x)| d * x))
    }

    fn apply_block(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = m.clone();
        for (i, d) in self.0.iter().enumerate() {
            out.row_mut(i).scale_mut(*d);
        }
        out
    }
}

/// An operator shifted by a multiple of the identity: `M + shift I`.
pub struct ShiftedOp<'a, T: SymOp + ?Sized> {
    pub inner: &'a T,
    pub shift: f64,
}

impl<T: SymOp + ?Sized> SymOp for ShiftedOp<'_, T> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self.inner.apply(v) + v * self.shift
    }

    fn apply_block(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        self.inner.apply_block(m) + m * self.shift
    }
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > tol {
                return false;
            }
        }
    }
    true
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigendecomposition `M = U diag(lambda) U'` of a symmetric matrix.
pub fn sym_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = m.clone().symmetric_eigen();
    (eig.eigenvalues.iter().cloned().collect(), eig.eigenvectors)
}

/// Applies `f` to the spectrum of a symmetric matrix.
pub fn spectral_map(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let (vals, u) = sym_eigen(m);
    let d = DMatrix::from_diagonal(&DVector::from_iterator(vals.len(), vals.iter().map(|&v| f(v))));
    &u * d * u.transpose()
}

/// Spectral absolute value `|M|`.
pub fn mat_abs(m: &DMatrix<f64>) -> DMatrix<f64> {
    spectral_map(m, f64::abs)
}

/// Largest eigenvalue.
pub fn lambda_max(m: &DMatrix<f64>) -> f64 {
    sym_eigen(m).0.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// Smallest eigenvalue.
pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    sym_eigen(m).0.into_iter().fold(f64::INFINITY, f64::min)
}

/// Operator norm (largest absolute eigenvalue).
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    sym_eigen(m).0.into_iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Dense `exp(M)` via eigendecomposition.
pub fn mat_exp(m: &DMatrix<f64>) -> DMatrix<f64> {
    spectral_map(m, f64::exp)
}

/// `exp(M) / Tr exp(M)` with the max-eigenvalue shift for stability, plus
/// `ln Tr exp(M)`.
pub fn mat_exp_normalized(m: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let (vals, u) = sym_eigen(m);
    let top = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = vals.iter().map(|&v| (v - top).exp()).collect();
    let total: f64 = w.iter().sum();
    let d = DMatrix::from_diagonal(&DVector::from_iterator(
        w.len(),
        w.iter().map(|&v| v / total),
    ));
    (&u * d * u.transpose(), top + total.ln())
}

/// `log Y` for a positive definite `Y`.
pub fn mat_log(y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (vals, u) = sym_eigen(y);
    if vals.iter().any(|&v| v <= 0.0) {
        return Err(Error::SingularDensity);
    }
    let d = DMatrix::from_diagonal(&DVector::from_iterator(
        vals.len(),
        vals.iter().map(|&v| v.ln()),
    ));
    Ok(&u * d * u.transpose())
}

/// Negated von Neumann entropy `H(Y) = <Y, log Y> = sum lambda ln lambda`,
/// with `0 ln 0 := 0`.
pub fn von_neumann_neg_entropy(y: &DMatrix<f64>) -> f64 {
    sym_eigen(y)
        .0
        .into_iter()
        .map(|v| if v > 0.0 { v * v.ln() } else { 0.0 })
        .sum()
}

/// Frobenius inner product, row-major accumulation.
pub fn frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(i, j)];
        }
    }
    acc
}

/// Quantum relative entropy `<Y', log Y' - log Y>` (the Bregman divergence
/// of `H` between trace-1 points).
pub fn quantum_relative_entropy(y_new: &DMatrix<f64>, y_old: &DMatrix<f64>) -> Result<f64> {
    let log_new = mat_log(y_new)?;
    let log_old = mat_log(y_old)?;
    Ok(frob(y_new, &(log_new - log_old)))
}
