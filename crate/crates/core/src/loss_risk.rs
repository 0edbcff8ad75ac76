//! Stein loss, closed-form minimum risks, and Monte Carlo risk estimation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{estimate_from_scatter, Method, ScatterMatrix};
use crate::matrix::{successive_diagonalize, SymPd};
use crate::runner::{mean_and_se, partition_failures, run_replicates, Parallelism};
use crate::sim::sample_gaussian_with;
use crate::special::digamma;

/// `tr(Σ⁻¹Φ) − log det(Σ⁻¹Φ) − p`.
///
/// The trace uses the whitened matrix `T⁻¹ Φ T⁻ᵀ` with `Σ = TTᵀ`, and both
/// log-determinants come from Cholesky diagonals.
pub fn stein_loss(phi: &SymPd, sigma: &SymPd) -> Result<f64> {
    let p = sigma.dim();
    if phi.dim() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            actual: phi.dim(),
        });
    }
    let trace = sigma.factor().whiten(phi.matrix()).trace();
    let loss = trace - (phi.log_det() - sigma.log_det()) - p as f64;
    Ok(loss.max(0.0))
}

/// `E[log χ²_k] = log 2 + ψ(k/2)`.
pub fn elog_chisq(k: usize) -> Result<f64> {
    if k < 1 {
        return Err(Error::Domain("chi-square degrees of freedom must be at least 1".into()));
    }
    Ok(std::f64::consts::LN_2 + digamma(k as f64 / 2.0))
}

/// Equivariance class whose best estimator's risk is computed in closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskKind {
    /// General linear group, attained by `A/n`.
    Ml,
    /// Lower-triangular group, attained by the triangular estimator.
    Stein,
    /// Positive-diagonal group, attained by the pivot-diagonal estimator.
    Dp,
}

impl RiskKind {
    pub const ALL: [RiskKind; 3] = [RiskKind::Ml, RiskKind::Stein, RiskKind::Dp];

    pub fn for_method(method: Method) -> Option<Self> {
        match method {
            Method::Sample => Some(RiskKind::Ml),
            Method::SteinTriangular => Some(RiskKind::Stein),
            Method::DpEquivariant => Some(RiskKind::Dp),
            Method::Tsai => None,
        }
    }
}

/// `Σ_{i=1}^p { log d_i − E[log χ²_{n−i+1}] }` with `d_i = n`, `n+p−2i+1` or `n−i+1`.
pub fn min_risk(kind: RiskKind, n: usize, p: usize) -> Result<f64> {
    if p < 1 || n < p {
        return Err(Error::Domain(format!("need n ≥ p ≥ 1, got n={n}, p={p}")));
    }
    (1..=p)
        .map(|i| {
            let d = match kind {
                RiskKind::Ml => n,
                RiskKind::Stein => n + p + 1 - 2 * i,
                RiskKind::Dp => n + 1 - i,
            };
            Ok((d as f64).ln() - elog_chisq(n + 1 - i)?)
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub method: Method,
    pub mean_loss: f64,
    pub std_error: f64,
    pub replicates: usize,
    pub failed: usize,
    pub n: usize,
    pub p: usize,
    pub seed: u64,
}

/// The target an estimator's loss is measured against: Σ itself, or the
/// diagonal of Schur pivots of Σ for the pivot-diagonal estimator.
pub fn loss_target(method: Method, sigma: &SymPd) -> Result<SymPd> {
    match method {
        Method::DpEquivariant => {
            let pivots = successive_diagonalize(sigma)?.pivots;
            SymPd::from_diagonal(pivots.as_slice())
        }
        _ => Ok(sigma.clone()),
    }
}

/// Stein loss of `method` on one mean-zero Gaussian data set per replicate.
///
/// Replicate `r` draws its data from the generator derived from `(seed, r)`,
/// so the estimate is identical for any worker count.
pub fn monte_carlo_risk(
    method: Method,
    sigma: &SymPd,
    n: usize,
    replicates: usize,
    seed: u64,
    parallelism: Parallelism,
) -> Result<RiskEstimate> {
    let p = sigma.dim();
    if replicates < 2 {
        return Err(Error::Config("at least 2 replicates are needed".into()));
    }
    if n < p {
        return Err(Error::Config(format!("need n ≥ p, got n={n}, p={p}")));
    }
    let target = loss_target(method, sigma)?;
    let outcomes = run_replicates(replicates, seed, parallelism, |_, rng| {
        let x = sample_gaussian_with(sigma, n, None, rng)?;
        let a = ScatterMatrix::from_data(&x, crate::estimators::NConvention::Uncentered)?;
        let est = estimate_from_scatter(&a, method)?;
        stein_loss(&est.to_sym_pd()?, &target)
    })?;
    let (losses, failures) = partition_failures(outcomes)?;
    let (mean_loss, std_error) = mean_and_se(&losses);
    Ok(RiskEstimate {
        method,
        mean_loss,
        std_error,
        replicates,
        failed: failures.len(),
        n,
        p,
        seed,
    })
}
