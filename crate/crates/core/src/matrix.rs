//! Symmetric positive-definite matrix primitives.
//!
//! Conventions used throughout the crate:
//!
//! - eigenvalues are always reported in descending order, `l[0] >= l[1] >= ...`,
//!   with eigenvector column `i` paired to eigenvalue `i`;
//! - every eigenvector is sign-fixed so that its first component of magnitude
//!   above `1e-12` is nonnegative;
//! - inputs whose relative asymmetry is at most `1e-12` are symmetrized as
//!   `(M + Mᵀ)/2`, anything larger is rejected.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative asymmetry accepted (and then removed) on construction.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Relative eigenvalue gap below which a decomposition is flagged as tied.
pub const TIE_TOL: f64 = 1e-12;
/// Components smaller than this are skipped by the eigenvector sign rule.
pub const SIGN_TOL: f64 = 1e-12;

/// A validated `p×p` symmetric positive-definite matrix.
///
/// Construction symmetrizes the input and computes its Cholesky factor, which is
/// cached for solves and log-determinants.
#[derive(Debug, Clone, PartialEq)]
pub struct SymPd {
    matrix: DMatrix<f64>,
    factor: LowerTriangular,
}

impl SymPd {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let matrix = symmetrize(matrix)?;
        let factor = LowerTriangular::factor(&matrix)?;
        Ok(Self { matrix, factor })
    }

    pub fn identity(p: usize) -> Self {
        Self::from_diagonal(&vec![1.0; p]).expect("identity is positive definite")
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn factor(&self) -> &LowerTriangular {
        &self.factor
    }

    /// `log det` as twice the sum of the log Cholesky diagonal.
    pub fn log_det(&self) -> f64 {
        2.0 * self.factor.0.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Solves `M x = b` through the cached Cholesky factor.
    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: b.len(),
            });
        }
        let y = self.factor.forward_solve(b);
        Ok(self.factor.backward_solve_transpose(&y))
    }

    /// The quadratic form `bᵀ M⁻¹ b`.
    pub fn inv_quad_form(&self, b: &DVector<f64>) -> Result<f64> {
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: b.len(),
            });
        }
        let y = self.factor.forward_solve(b);
        Ok(y.norm_squared())
    }

    /// Explicit inverse, for callers that genuinely need the matrix.
    pub fn inverse(&self) -> DMatrix<f64> {
        let p = self.dim();
        let mut inv = DMatrix::zeros(p, p);
        for j in 0..p {
            let mut e = DVector::zeros(p);
            e[j] = 1.0;
            let y = self.factor.forward_solve(&e);
            inv.set_column(j, &self.factor.backward_solve_transpose(&y));
        }
        (&inv + inv.transpose()) * 0.5
    }
}

fn symmetrize(matrix: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (rows, cols) = matrix.shape();
    if rows != cols {
        return Err(Error::NotSquare { rows, cols });
    }
    if rows == 0 {
        return Err(Error::Domain("matrix must have dimension at least 1".into()));
    }
    if let Some(pos) = matrix.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            row: pos % rows,
            col: pos / rows,
        });
    }
    let scale = matrix.amax();
    let asym = (&matrix - matrix.transpose()).amax();
    let relative = if scale > 0.0 { asym / scale } else { 0.0 };
    if relative > SYMMETRY_TOL {
        return Err(Error::Asymmetric { asymmetry: relative });
    }
    if asym == 0.0 {
        return Ok(matrix);
    }
    Ok((&matrix + matrix.transpose()) * 0.5)
}

/// Lower-triangular factor with strictly positive diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerTriangular(DMatrix<f64>);

impl LowerTriangular {
    /// Cholesky factorization `m = T Tᵀ` of a symmetric matrix.
    ///
    /// Only the lower triangle of `m` is read. A nonpositive pivot reports its index.
    pub fn factor(m: &DMatrix<f64>) -> Result<Self> {
        let p = m.nrows();
        if m.ncols() != p {
            return Err(Error::NotSquare {
                rows: p,
                cols: m.ncols(),
            });
        }
        let mut t = DMatrix::<f64>::zeros(p, p);
        for j in 0..p {
            let mut pivot = m[(j, j)];
            for k in 0..j {
                pivot -= t[(j, k)] * t[(j, k)];
            }
            if !(pivot > 0.0) {
                return Err(Error::NotPositiveDefinite { index: j, pivot });
            }
            let d = pivot.sqrt();
            t[(j, j)] = d;
            for i in (j + 1)..p {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= t[(i, k)] * t[(j, k)];
                }
                t[(i, j)] = s / d;
            }
        }
        Ok(Self(t))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn diagonal(&self) -> DVector<f64> {
        self.0.diagonal()
    }

    /// `T Tᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.0 * self.0.transpose()
    }

    /// Solves `T y = b`.
    pub fn forward_solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let p = self.dim();
        let mut y = b.clone();
        for i in 0..p {
            let mut s = y[i];
            for k in 0..i {
                s -= self.0[(i, k)] * y[k];
            }
            y[i] = s / self.0[(i, i)];
        }
        y
    }

    /// Solves `Tᵀ x = y`.
    pub fn backward_solve_transpose(&self, y: &DVector<f64>) -> DVector<f64> {
        let p = self.dim();
        let mut x = y.clone();
        for i in (0..p).rev() {
            let mut s = x[i];
            for k in (i + 1)..p {
                s -= self.0[(k, i)] * x[k];
            }
            x[i] = s / self.0[(i, i)];
        }
        x
    }

    /// `T⁻¹ M T⁻ᵀ` for a square `M` of matching dimension.
    pub fn whiten(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let p = self.dim();
        let mut left = DMatrix::zeros(p, p);
        for j in 0..p {
            left.set_column(j, &self.forward_solve(&m.column(j).into_owned()));
        }
        let lt = left.transpose();
        let mut out = DMatrix::zeros(p, p);
        for j in 0..p {
            out.set_column(j, &self.forward_solve(&lt.column(j).into_owned()));
        }
        out
    }
}

/// Cholesky factor `T` of `m`, so that `m = T Tᵀ`.
pub fn cholesky(m: &SymPd) -> LowerTriangular {
    m.factor.clone()
}

/// Eigenvalues in descending order with paired, sign-fixed orthonormal eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomp {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
    /// Set when two adjacent eigenvalues differ by less than `TIE_TOL · l[0]`.
    pub near_tie: bool,
}

impl SpectralDecomp {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `U diag(values) Uᵀ` with this decomposition's eigenvectors.
    pub fn compose(&self, values: &[f64]) -> DMatrix<f64> {
        let scaled = DMatrix::from_fn(self.dim(), self.dim(), |i, j| self.eigenvectors[(i, j)] * values[j]);
        let m = scaled * self.eigenvectors.transpose();
        (&m + m.transpose()) * 0.5
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.compose(self.eigenvalues.as_slice())
    }

    /// Smallest adjacent gap relative to the largest eigenvalue; `inf` for `p = 1`.
    pub fn min_relative_gap(&self) -> f64 {
        relative_min_gap(self.eigenvalues.as_slice())
    }
}

pub(crate) fn relative_min_gap(desc: &[f64]) -> f64 {
    let scale = desc.first().map_or(1.0, |v| v.abs().max(f64::MIN_POSITIVE));
    desc.windows(2)
        .map(|w| (w[0] - w[1]) / scale)
        .fold(f64::INFINITY, f64::min)
}

/// Spectral decomposition `m = U L Uᵀ` under the crate's ordering and sign rules.
pub fn spectral_decompose(m: &SymPd) -> Result<SpectralDecomp> {
    let p = m.dim();
    let max_iter = 1000 + 100 * p;
    let eig = SymmetricEigen::try_new(m.matrix.clone(), f64::EPSILON, max_iter).ok_or_else(|| {
        Error::EigenNonConvergence {
            what: format!("{p}x{p} symmetric matrix"),
        }
    })?;

    let mut order: Vec<usize> = (0..p).collect();
    // stable: exact ties keep the solver's column order
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let eigenvalues = DVector::from_iterator(p, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut eigenvectors = DMatrix::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        canonicalize_sign(&mut col);
        eigenvectors.set_column(dst, &col);
    }

    let near_tie = relative_min_gap(eigenvalues.as_slice()) < TIE_TOL;
    Ok(SpectralDecomp {
        eigenvalues,
        eigenvectors,
        near_tie,
    })
}

fn canonicalize_sign(col: &mut DVector<f64>) {
    if let Some(first) = col.iter().find(|v| v.abs() > SIGN_TOL) {
        if *first < 0.0 {
            col.neg_mut();
        }
    }
}

/// Pivots of the successive Schur-complement reduction together with the
/// elimination multipliers of each step.
#[derive(Debug, Clone, PartialEq)]
pub struct SchurReduction {
    /// `a_(k)11` for `k = 1..p`.
    pub pivots: DVector<f64>,
    /// `A_(k)21 / a_(k)11`; the first column below the unit entry of the
    /// elimination matrix at step `k` is the negation of this vector.
    pub multipliers: Vec<DVector<f64>>,
}

impl SchurReduction {
    pub fn determinant(&self) -> f64 {
        self.pivots.iter().product()
    }

    pub fn log_determinant(&self) -> f64 {
        self.pivots.iter().map(|v| v.ln()).sum()
    }

    /// The diagonal matrix of pivots.
    pub fn diagonal(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.pivots)
    }

    /// Elimination matrix of step `k` (zero-based) acting on the trailing
    /// `(p-k)×(p-k)` block.
    pub fn elimination_matrix(&self, k: usize) -> DMatrix<f64> {
        let m = &self.multipliers[k];
        let q = m.len() + 1;
        let mut h = DMatrix::identity(q, q);
        for i in 0..m.len() {
            h[(i + 1, 0)] = -m[i];
        }
        h
    }
}

/// Reduces `m` to its pivot diagonal by repeated leading Schur complements
/// `A_(k+1) = A_(k)22 − A_(k)21 A_(k)12 / a_(k)11`.
pub fn successive_diagonalize(m: &SymPd) -> Result<SchurReduction> {
    let p = m.dim();
    let mut current = m.matrix.clone();
    let mut pivots = Vec::with_capacity(p);
    let mut multipliers = Vec::with_capacity(p);
    for k in 0..p {
        let pivot = current[(0, 0)];
        if !(pivot > 0.0) {
            return Err(Error::NotPositiveDefinite { index: k, pivot });
        }
        let q = current.nrows();
        let col = current.view((1, 0), (q - 1, 1)).into_owned();
        let block = current.view((1, 1), (q - 1, q - 1)).into_owned();
        let next = &block - (&col * col.transpose()) / pivot;
        pivots.push(pivot);
        multipliers.push(DVector::from_iterator(q - 1, col.iter().map(|v| v / pivot)));
        current = (&next + next.transpose()) * 0.5;
    }
    Ok(SchurReduction {
        pivots: DVector::from_vec(pivots),
        multipliers,
    })
}
