//! Covariance estimators equivariant under four matrix groups.
//!
//! | method            | group                    | estimate                         |
//! |-------------------|--------------------------|----------------------------------|
//! | `Sample`          | general linear           | `A / n`                          |
//! | `SteinTriangular` | lower triangular         | `T diag(1/(n+p−2i+1)) Tᵀ`, `A = TTᵀ` |
//! | `DpEquivariant`   | positive diagonal        | `diag(a_(i)11 / (n−i+1))`        |
//! | `Tsai`            | orthogonal               | `U diag(ψ̂) Uᵀ`, `S = U L Uᵀ`     |
//!
//! `n` is always the Wishart degrees of freedom of the scatter matrix: the
//! sample count for mean-zero data, one less than it for centered data.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::serde_matrix;
use crate::matrix::{
    cholesky, relative_min_gap, spectral_decompose, successive_diagonalize, SpectralDecomp, SymPd, TIE_TOL,
};

/// Relative guard on the shrinkage denominators: `d_i ≤ SHRINKAGE_EPS · n` is singular.
pub const SHRINKAGE_EPS: f64 = 1e-10;

/// `n` observations of dimension `p`, stored as an `n×p` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    rows: DMatrix<f64>,
}

impl DataMatrix {
    pub fn new(rows: DMatrix<f64>) -> Result<Self> {
        let (n, p) = rows.shape();
        if n < 2 {
            return Err(Error::InvalidData(format!("need at least 2 observations, got {n}")));
        }
        if p < 1 {
            return Err(Error::InvalidData("need at least one variable".into()));
        }
        if let Some(pos) = rows.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos % n,
                col: pos / n,
            });
        }
        Ok(Self { rows })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != p) {
            return Err(Error::RaggedRow {
                line: i + 1,
                expected: p,
                found: r.len(),
            });
        }
        Self::new(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
    }

    pub fn n(&self) -> usize {
        self.rows.nrows()
    }

    pub fn p(&self) -> usize {
        self.rows.ncols()
    }

    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn mean(&self) -> DVector<f64> {
        self.rows.row_mean().transpose()
    }

    /// Applies `x ↦ G x` to every observation.
    pub fn transform(&self, g: &DMatrix<f64>) -> Result<Self> {
        if g.ncols() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                actual: g.ncols(),
            });
        }
        Self::new(&self.rows * g.transpose())
    }

    /// Cross-product `Σ xᵢxᵢᵀ`, optionally about the sample mean.
    pub fn cross_product(&self, centered: bool) -> DMatrix<f64> {
        let m = if centered {
            let mean = self.rows.row_mean();
            let mut c = self.rows.clone();
            for mut row in c.row_iter_mut() {
                row -= &mean;
            }
            c.transpose() * c
        } else {
            self.rows.transpose() * &self.rows
        };
        (&m + m.transpose()) * 0.5
    }
}

/// Divisor convention for the sample covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NConvention {
    /// Mean-zero data, `S = Σ xᵢxᵢᵀ / n`.
    Uncentered,
    /// `S = Σ (xᵢ−x̄)(xᵢ−x̄)ᵀ / (n−1)`.
    Centered,
}

impl NConvention {
    /// Wishart degrees of freedom for `n` observations.
    pub fn effective_n(self, n: usize) -> usize {
        match self {
            NConvention::Uncentered => n,
            NConvention::Centered => n - 1,
        }
    }

    pub fn is_centered(self) -> bool {
        matches!(self, NConvention::Centered)
    }
}

/// The scatter matrix `A` and its Wishart degrees of freedom.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterMatrix {
    pub matrix: SymPd,
    pub n: usize,
    pub centered: bool,
}

impl ScatterMatrix {
    pub fn new(matrix: SymPd, n: usize, centered: bool) -> Self {
        Self { matrix, n, centered }
    }

    pub fn from_data(x: &DataMatrix, convention: NConvention) -> Result<Self> {
        let matrix = SymPd::new(x.cross_product(convention.is_centered()))?;
        Ok(Self::new(
            matrix,
            convention.effective_n(x.n()),
            convention.is_centered(),
        ))
    }

    pub fn p(&self) -> usize {
        self.matrix.dim()
    }

    fn require_n_at_least_p(&self) -> Result<()> {
        if self.n < self.p() {
            return Err(Error::Domain(format!(
                "degrees of freedom {} smaller than dimension {}",
                self.n,
                self.p()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sample,
    SteinTriangular,
    DpEquivariant,
    Tsai,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Sample,
        Method::SteinTriangular,
        Method::DpEquivariant,
        Method::Tsai,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sample => "sample",
            Method::SteinTriangular => "stein_triangular",
            Method::DpEquivariant => "dp_equivariant",
            Method::Tsai => "tsai",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "sample" | "ml" => Ok(Method::Sample),
            "stein_triangular" | "stein" => Ok(Method::SteinTriangular),
            "dp_equivariant" | "dp" => Ok(Method::DpEquivariant),
            "tsai" => Ok(Method::Tsai),
            other => Err(Error::Config(format!("unknown estimator {other:?}"))),
        }
    }
}

/// What the estimate is an estimate of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateTarget {
    /// The covariance matrix itself.
    Sigma,
    /// The diagonal of Schur pivots of the covariance matrix.
    PivotDiagonal,
}

/// Sample eigenvalues, their shrunk counterparts and the shrinkage denominators
/// `d_i = n − p + 1 − l_i Σ_{j≠i} 1/(l_j − l_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageTable {
    pub sample_eigenvalues: Vec<f64>,
    pub shrunk_eigenvalues: Vec<f64>,
    pub denominators: Vec<f64>,
}

impl ShrinkageTable {
    pub fn len(&self) -> usize {
        self.sample_eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_eigenvalues.is_empty()
    }

    /// Whether the shrunk eigenvalues are strictly descending.
    pub fn preserves_order(&self) -> bool {
        self.shrunk_eigenvalues.windows(2).all(|w| w[0] > w[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    #[serde(with = "serde_matrix")]
    pub matrix: DMatrix<f64>,
    pub method: Method,
    /// Wishart degrees of freedom used by the estimator.
    pub n: usize,
    pub p: usize,
    /// `[n]` or `[n−1]` for the sample covariance, `d_S` / `d_0` for the
    /// triangular / diagonal estimators, the shrinkage denominators for `Tsai`.
    pub divisors: Vec<f64>,
    pub target: EstimateTarget,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shrinkage: Option<ShrinkageTable>,
}

impl CovarianceEstimate {
    pub fn to_sym_pd(&self) -> Result<SymPd> {
        SymPd::new(self.matrix.clone())
    }
}

/// Sample covariance under the chosen divisor convention.
///
/// Never fails on a valid [`DataMatrix`]; rank deficiency surfaces when a
/// consumer converts the matrix with [`CovarianceEstimate::to_sym_pd`].
pub fn sample_covariance(x: &DataMatrix, mode: NConvention) -> CovarianceEstimate {
    let n = mode.effective_n(x.n());
    let a = x.cross_product(mode.is_centered());
    CovarianceEstimate {
        matrix: a / n as f64,
        method: Method::Sample,
        n,
        p: x.p(),
        divisors: vec![n as f64],
        target: EstimateTarget::Sigma,
        shrinkage: None,
    }
}

/// Best lower-triangular-equivariant estimator `T D_S⁻¹ Tᵀ` with `d_Sii = n + p − 2i + 1`.
pub fn stein_triangular(a: &ScatterMatrix) -> Result<CovarianceEstimate> {
    a.require_n_at_least_p()?;
    let p = a.p();
    let t = cholesky(&a.matrix);
    let divisors: Vec<f64> = (1..=p).map(|i| (a.n + p + 1 - 2 * i) as f64).collect();
    let mut scaled = t.matrix().clone();
    for (j, d) in divisors.iter().enumerate() {
        scaled.column_mut(j).scale_mut(1.0 / d.sqrt());
    }
    let m = &scaled * scaled.transpose();
    Ok(CovarianceEstimate {
        matrix: (&m + m.transpose()) * 0.5,
        method: Method::SteinTriangular,
        n: a.n,
        p,
        divisors,
        target: EstimateTarget::Sigma,
        shrinkage: None,
    })
}

/// Best diagonal-equivariant estimator `diag(a_(i)11 / (n − i + 1))` of the
/// pivot diagonal of Σ.
pub fn dp_equivariant(a: &ScatterMatrix) -> Result<CovarianceEstimate> {
    a.require_n_at_least_p()?;
    let p = a.p();
    let reduction = successive_diagonalize(&a.matrix)?;
    let divisors: Vec<f64> = (1..=p).map(|i| (a.n + 1 - i) as f64).collect();
    let diag = DVector::from_iterator(p, reduction.pivots.iter().zip(&divisors).map(|(a, d)| a / d));
    Ok(CovarianceEstimate {
        matrix: DMatrix::from_diagonal(&diag),
        method: Method::DpEquivariant,
        n: a.n,
        p,
        divisors,
        target: EstimateTarget::PivotDiagonal,
        shrinkage: None,
    })
}

/// Shrinks descending sample eigenvalues:
/// `ψ̂_i = n l_i / (n − p + 1 − l_i Σ_{j≠i} 1/(l_j − l_i))`.
pub fn tsai_eigenvalues(l: &[f64], n: usize) -> Result<ShrinkageTable> {
    let p = l.len();
    if p == 0 {
        return Err(Error::Domain("no eigenvalues".into()));
    }
    if n < p {
        return Err(Error::Domain(format!(
            "degrees of freedom {n} smaller than dimension {p}"
        )));
    }
    if let Some(i) = l.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Domain(format!(
            "eigenvalue {i} is {} but must be positive",
            l[i]
        )));
    }
    if let Some(i) = l.windows(2).position(|w| w[0] < w[1]) {
        return Err(Error::NotDescending { index: i + 1 });
    }
    if relative_min_gap(l) <= TIE_TOL {
        let i = l
            .windows(2)
            .position(|w| (w[0] - w[1]) <= TIE_TOL * l[0])
            .expect("a tied pair exists");
        return Err(Error::EigenvalueTie {
            first: i,
            second: i + 1,
            value: l[i],
        });
    }

    let nf = n as f64;
    let base = (n + 1 - p) as f64;
    let mut shrunk = Vec::with_capacity(p);
    let mut denominators = Vec::with_capacity(p);
    for (i, &li) in l.iter().enumerate() {
        let hilbert_sum: f64 = l
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &lj)| 1.0 / (lj - li))
            .sum();
        let d = base - li * hilbert_sum;
        if d <= SHRINKAGE_EPS * nf {
            return Err(Error::ShrinkageSingularity {
                index: i,
                denominator: d,
            });
        }
        denominators.push(d);
        shrunk.push(nf * li / d);
    }
    Ok(ShrinkageTable {
        sample_eigenvalues: l.to_vec(),
        shrunk_eigenvalues: shrunk,
        denominators,
    })
}

/// Shrinkage table for an existing decomposition of `S`.
pub fn tsai_shrink(decomp: &SpectralDecomp, n: usize) -> Result<ShrinkageTable> {
    tsai_eigenvalues(decomp.eigenvalues.as_slice(), n)
}

/// Rotation-equivariant estimator `U diag(ψ̂) Uᵀ` built from a sample covariance.
pub fn tsai_estimator(s: &CovarianceEstimate, n: usize) -> Result<CovarianceEstimate> {
    if s.method != Method::Sample {
        return Err(Error::Config(format!(
            "the eigenvalue-shrinkage estimator needs a sample covariance, got {}",
            s.method
        )));
    }
    let decomp = spectral_decompose(&s.to_sym_pd()?)?;
    let table = tsai_shrink(&decomp, n)?;
    Ok(CovarianceEstimate {
        matrix: decomp.compose(&table.shrunk_eigenvalues),
        method: Method::Tsai,
        n,
        p: s.p,
        divisors: table.denominators.clone(),
        target: EstimateTarget::Sigma,
        shrinkage: Some(table),
    })
}

/// Runs `method` on raw data under the given convention.
pub fn estimate(x: &DataMatrix, method: Method, convention: NConvention) -> Result<CovarianceEstimate> {
    match method {
        Method::Sample => Ok(sample_covariance(x, convention)),
        Method::SteinTriangular => stein_triangular(&ScatterMatrix::from_data(x, convention)?),
        Method::DpEquivariant => dp_equivariant(&ScatterMatrix::from_data(x, convention)?),
        Method::Tsai => {
            let s = sample_covariance(x, convention);
            tsai_estimator(&s, s.n)
        }
    }
}

/// Runs `method` on a scatter matrix; the sample covariance is `A / n`.
pub fn estimate_from_scatter(a: &ScatterMatrix, method: Method) -> Result<CovarianceEstimate> {
    match method {
        Method::Sample | Method::Tsai => {
            let s = CovarianceEstimate {
                matrix: a.matrix.matrix() / a.n as f64,
                method: Method::Sample,
                n: a.n,
                p: a.p(),
                divisors: vec![a.n as f64],
                target: EstimateTarget::Sigma,
                shrinkage: None,
            };
            if method == Method::Sample {
                Ok(s)
            } else {
                tsai_estimator(&s, a.n)
            }
        }
        Method::SteinTriangular => stein_triangular(a),
        Method::DpEquivariant => dp_equivariant(a),
    }
}
