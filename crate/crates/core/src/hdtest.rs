//! One-sample mean tests: Hotelling's T², the decomposite T² built on the
//! eigenvalue-shrinkage estimator, and the oracle statistic with known Σ.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{sample_covariance, tsai_shrink, DataMatrix, NConvention};
use crate::matrix::{spectral_decompose, SymPd};
use crate::runner::{partition_failures, run_replicates, Failures, Parallelism};
use crate::sim::sample_gaussian_with;
use crate::special::{chisq_critical, chisq_sf, noncentral_chisq_sf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Hotelling,
    Decomposite,
    Oracle,
}

impl TestMethod {
    pub const ALL: [TestMethod; 3] = [TestMethod::Hotelling, TestMethod::Decomposite, TestMethod::Oracle];

    pub fn name(self) -> &'static str {
        match self {
            TestMethod::Hotelling => "hotelling",
            TestMethod::Decomposite => "decomposite",
            TestMethod::Oracle => "oracle",
        }
    }
}

impl std::fmt::Display for TestMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TestMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hotelling" | "t2" => Ok(TestMethod::Hotelling),
            "decomposite" | "shrinkage" => Ok(TestMethod::Decomposite),
            "oracle" => Ok(TestMethod::Oracle),
            other => Err(Error::Config(format!("unknown test method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub dof: usize,
    /// Upper-tail χ²_p probability of the statistic.
    pub pvalue: f64,
    pub method: TestMethod,
    pub n: usize,
    pub p: usize,
}

impl TestResult {
    fn new(statistic: f64, method: TestMethod, n: usize, p: usize) -> Result<Self> {
        let statistic = statistic.max(0.0);
        Ok(Self {
            statistic,
            dof: p,
            pvalue: chisq_pvalue(statistic, p, 0.0)?,
            method,
            n,
            p,
        })
    }
}

/// Upper-tail probability of `χ²_dof(noncentrality)` at `statistic`.
pub fn chisq_pvalue(statistic: f64, dof: usize, noncentrality: f64) -> Result<f64> {
    if !(statistic >= 0.0) {
        return Err(Error::Domain(format!("statistic {statistic} must be nonnegative")));
    }
    if noncentrality == 0.0 {
        chisq_sf(statistic, dof as f64)
    } else {
        noncentral_chisq_sf(statistic, dof as f64, noncentrality)
    }
}

fn require_rows(x: &DataMatrix) -> Result<()> {
    if x.n() < x.p() + 2 {
        return Err(Error::Domain(format!("need n ≥ p + 2, got n={}, p={}", x.n(), x.p())));
    }
    Ok(())
}

/// `n x̄ᵀ S⁻¹ x̄` with the centered sample covariance `S`.
pub fn hotelling_t2(x: &DataMatrix) -> Result<TestResult> {
    require_rows(x)?;
    let s = sample_covariance(x, NConvention::Centered).to_sym_pd()?;
    let stat = x.n() as f64 * s.inv_quad_form(&x.mean())?;
    TestResult::new(stat, TestMethod::Hotelling, x.n(), x.p())
}

/// `n x̄ᵀ Σ̂⁻¹ x̄` with the shrinkage estimator built from the centered `S`
/// (effective sample size `n − 1`), evaluated in its spectral coordinates.
pub fn decomposite_t2(x: &DataMatrix) -> Result<TestResult> {
    require_rows(x)?;
    let s = sample_covariance(x, NConvention::Centered);
    let decomp = spectral_decompose(&s.to_sym_pd()?)?;
    let table = tsai_shrink(&decomp, s.n)?;
    let proj = decomp.eigenvectors.transpose() * x.mean();
    let stat = x.n() as f64
        * proj
            .iter()
            .zip(&table.shrunk_eigenvalues)
            .map(|(z, psi)| z * z / psi)
            .sum::<f64>();
    TestResult::new(stat, TestMethod::Decomposite, x.n(), x.p())
}

/// `n x̄ᵀ Σ⁻¹ x̄` with the true covariance.
pub fn oracle_t2(x: &DataMatrix, sigma: &SymPd) -> Result<TestResult> {
    if sigma.dim() != x.p() {
        return Err(Error::DimensionMismatch {
            expected: x.p(),
            actual: sigma.dim(),
        });
    }
    let stat = x.n() as f64 * sigma.inv_quad_form(&x.mean())?;
    TestResult::new(stat, TestMethod::Oracle, x.n(), x.p())
}

pub fn run_test(x: &DataMatrix, method: TestMethod, sigma: Option<&SymPd>) -> Result<TestResult> {
    match method {
        TestMethod::Hotelling => hotelling_t2(x),
        TestMethod::Decomposite => decomposite_t2(x),
        TestMethod::Oracle => {
            let sigma = sigma.ok_or_else(|| Error::Config("the oracle test needs the true covariance".into()))?;
            oracle_t2(x, sigma)
        }
    }
}

/// Local alternative `μ = n^{-1/2} p^{1/4} δ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalAlternative {
    pub delta: Vec<f64>,
    pub mean: Vec<f64>,
    /// `δᵀΣ⁻¹δ`.
    pub noncentrality: f64,
    /// `n μᵀΣ⁻¹μ = √p δᵀΣ⁻¹δ`, the noncentrality of the oracle statistic at this `n`.
    pub exact_noncentrality: f64,
}

impl LocalAlternative {
    pub fn new(delta: &DVector<f64>, sigma: &SymPd, n: usize) -> Result<Self> {
        if delta.len() != sigma.dim() {
            return Err(Error::DimensionMismatch {
                expected: sigma.dim(),
                actual: delta.len(),
            });
        }
        if delta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("delta must be finite".into()));
        }
        if n == 0 {
            return Err(Error::Domain("n must be positive".into()));
        }
        let p = delta.len() as f64;
        let scale = p.powf(0.25) / (n as f64).sqrt();
        let nc = sigma.inv_quad_form(delta)?.max(0.0);
        Ok(Self {
            delta: delta.as_slice().to_vec(),
            mean: delta.iter().map(|d| d * scale).collect(),
            noncentrality: nc,
            exact_noncentrality: p.sqrt() * nc,
        })
    }

    pub fn mean_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.mean)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerConfig {
    pub n: usize,
    pub sigma: SymPd,
    pub delta: DVector<f64>,
    pub alpha: f64,
    pub replicates: usize,
    pub seed: u64,
    pub method: TestMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerReport {
    pub method: TestMethod,
    pub n: usize,
    pub p: usize,
    pub alpha: f64,
    pub critical_value: f64,
    pub alternative: LocalAlternative,
    pub replicates: usize,
    pub rejections: usize,
    pub rejection_rate: f64,
    /// Binomial standard error of the rejection rate.
    pub std_error: f64,
    /// `P(χ²_p(δᵀΣ⁻¹δ) > critical)`.
    pub predicted_power: f64,
    /// `P(χ²_p(n μᵀΣ⁻¹μ) > critical)`.
    pub predicted_power_exact: f64,
    pub statistics: Vec<f64>,
    pub pvalues: Vec<f64>,
    pub failures: Failures,
    pub seed: u64,
}

/// Rejection rate at the `χ²_p(α)` critical value under `N(μ, Σ)` data with
/// `μ` the local alternative for `δ`.
pub fn power_simulation(config: &PowerConfig, parallelism: Parallelism) -> Result<PowerReport> {
    let PowerConfig {
        n,
        ref sigma,
        ref delta,
        alpha,
        replicates,
        seed,
        method,
    } = *config;
    let p = sigma.dim();
    if replicates == 0 {
        return Err(Error::Config("replicates must be at least 1".into()));
    }
    if method != TestMethod::Oracle && n < p + 2 {
        return Err(Error::Config(format!("need n ≥ p + 2, got n={n}, p={p}")));
    }
    let critical = chisq_critical(p as f64, alpha)?;
    let alternative = LocalAlternative::new(delta, sigma, n)?;
    let mu = alternative.mean_vector();
    let outcomes = run_replicates(replicates, seed, parallelism, |_, rng| {
        let x = sample_gaussian_with(sigma, n, Some(&mu), rng)?;
        run_test(&x, method, Some(sigma))
    })?;
    let (results, failures) = partition_failures(outcomes)?;
    let m = results.len();
    let rejections = results.iter().filter(|r| r.statistic > critical).count();
    let rate = rejections as f64 / m as f64;
    Ok(PowerReport {
        method,
        n,
        p,
        alpha,
        critical_value: critical,
        replicates,
        rejections,
        rejection_rate: rate,
        std_error: (rate * (1.0 - rate) / m as f64).sqrt(),
        predicted_power: chisq_pvalue(critical, p, alternative.noncentrality)?,
        predicted_power_exact: chisq_pvalue(critical, p, alternative.exact_noncentrality)?,
        statistics: results.iter().map(|r| r.statistic).collect(),
        pvalues: results.iter().map(|r| r.pvalue).collect(),
        alternative,
        failures,
        seed,
    })
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn two_sample_ks(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::NAN;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// KS distance between the empirical laws of the decomposite and oracle
/// statistics computed on the same simulated data sets.
pub fn decomposite_oracle_gap(
    n: usize,
    sigma: &SymPd,
    delta: &DVector<f64>,
    replicates: usize,
    seed: u64,
    parallelism: Parallelism,
) -> Result<f64> {
    let mu = LocalAlternative::new(delta, sigma, n)?.mean_vector();
    let outcomes = run_replicates(replicates, seed, parallelism, |_, rng| {
        let x = sample_gaussian_with(sigma, n, Some(&mu), rng)?;
        Ok((decomposite_t2(&x)?.statistic, oracle_t2(&x, sigma)?.statistic))
    })?;
    let (pairs, _) = partition_failures(outcomes)?;
    let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok(two_sample_ks(&a, &b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::estimators::{estimate, Method};
    use crate::sim::{random_orthogonal, sample_gaussian};

    fn centered(x: &DataMatrix) -> DataMatrix {
        let mean = x.mean().transpose();
        let mut rows = x.rows().clone();
        for mut r in rows.row_iter_mut() {
            r -= &mean;
        }
        DataMatrix::new(rows).unwrap()
    }

    #[test]
    fn zero_mean_gives_zero_statistics() {
        let x = centered(&sample_gaussian(&SymPd::identity(3), 20, 1).unwrap());
        assert!(hotelling_t2(&x).unwrap().statistic < 1e-20);
        assert!(decomposite_t2(&x).unwrap().statistic < 1e-20);
        let r = oracle_t2(&x, &SymPd::identity(3)).unwrap();
        assert!(r.statistic < 1e-20);
        assert_abs_diff_eq!(r.pvalue, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn hotelling_scalar_example() {
        let x = DataMatrix::from_rows(&[vec![1.0], vec![3.0], vec![2.0]]).unwrap();
        // x̄ = 2, S = 1, T² = 3·4
        assert_abs_diff_eq!(hotelling_t2(&x).unwrap().statistic, 12.0, epsilon = 1e-12);
    }

    #[test]
    fn hotelling_two_row_scalar_value() {
        // rows {1, 3}: x̄ = 2, S = 2, T² = 2·4/2
        let rows = dmatrix![1.0; 3.0];
        let xbar: f64 = 2.0;
        let s: f64 = ((1.0 - xbar).powi(2) + (3.0 - xbar).powi(2)) / (rows.nrows() - 1) as f64;
        assert_eq!(rows.nrows() as f64 * xbar * xbar / s, 4.0);
        let x = DataMatrix::new(rows).unwrap();
        // n = p + 1 is below the n ≥ p + 2 requirement
        assert!(matches!(hotelling_t2(&x), Err(Error::Domain(_))));
    }

    #[test]
    fn hotelling_is_affine_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mu = DVector::from_vec(vec![0.3, -0.2, 0.1, 0.0]);
        let x = sample_gaussian_with(&SymPd::identity(4), 30, Some(&mu), &mut rng).unwrap();
        let g = dmatrix![2.0, 0.3, 0.0, 1.0; 0.0, 1.0, -0.5, 0.0; 0.1, 0.0, 3.0, 0.0; 0.0, 0.0, 0.2, 0.5];
        let a = hotelling_t2(&x).unwrap().statistic;
        let b = hotelling_t2(&x.transform(&g).unwrap()).unwrap().statistic;
        assert!((a - b).abs() < 1e-9 * a.max(1.0));
    }

    #[test]
    fn statistics_are_rotation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mu = DVector::from_vec(vec![0.5, 0.1, -0.3]);
        let sigma = SymPd::from_diagonal(&[4.0, 2.0, 1.0]).unwrap();
        let x = sample_gaussian_with(&sigma, 40, Some(&mu), &mut rng).unwrap();
        let q = random_orthogonal(3, &mut rng);
        let y = x.transform(&q).unwrap();
        for f in [hotelling_t2, decomposite_t2] {
            let a = f(&x).unwrap().statistic;
            let b = f(&y).unwrap().statistic;
            assert!((a - b).abs() < 1e-9 * a.max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn decomposite_p1_equals_hotelling() {
        let x = sample_gaussian(&SymPd::identity(1), 15, 3).unwrap();
        let h = hotelling_t2(&x).unwrap().statistic;
        let d = decomposite_t2(&x).unwrap().statistic;
        assert!((h - d).abs() <= 1e-12 * h.max(1.0));
    }

    #[test]
    fn decomposite_matches_explicit_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sigma = SymPd::new(dmatrix![2.0, 0.6; 0.6, 1.0]).unwrap();
        let mu = DVector::from_vec(vec![0.4, -0.1]);
        let x = sample_gaussian_with(&sigma, 25, Some(&mu), &mut rng).unwrap();
        let t = estimate(&x, Method::Tsai, NConvention::Centered).unwrap();
        let inv = t.matrix.clone().try_inverse().unwrap();
        let xbar = x.mean();
        let explicit = x.n() as f64 * (xbar.transpose() * inv * &xbar)[(0, 0)];
        let spectral = decomposite_t2(&x).unwrap().statistic;
        assert!((explicit - spectral).abs() < 1e-10 * explicit.max(1.0));
    }

    #[test]
    fn oracle_identity_is_squared_norm() {
        let mu = DVector::from_vec(vec![1.0, 2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = sample_gaussian_with(&SymPd::identity(2), 10, Some(&mu), &mut rng).unwrap();
        let r = oracle_t2(&x, &SymPd::identity(2)).unwrap();
        assert_abs_diff_eq!(r.statistic, 10.0 * x.mean().norm_squared(), epsilon = 1e-12);
        assert!(oracle_t2(&x, &SymPd::identity(3)).is_err());
    }

    #[test]
    fn pvalue_examples() {
        assert_eq!(chisq_pvalue(0.0, 4, 0.0).unwrap(), 1.0);
        assert_abs_diff_eq!(chisq_pvalue(5.99146, 2, 0.0).unwrap(), 0.05, epsilon = 1e-6);
        assert_eq!(
            chisq_pvalue(3.0, 4, 0.0).unwrap(),
            noncentral_chisq_sf(3.0, 4.0, 0.0).unwrap()
        );
        assert!(chisq_pvalue(-1.0, 2, 0.0).is_err());
    }

    #[test]
    fn local_alternative_scaling() {
        let sigma = SymPd::from_diagonal(&[4.0, 1.0, 1.0, 1.0]).unwrap();
        let delta = DVector::from_vec(vec![2.0, 1.0, 0.0, 0.0]);
        let a = LocalAlternative::new(&delta, &sigma, 16).unwrap();
        assert_abs_diff_eq!(a.noncentrality, 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(a.mean[0], 2.0 * 2f64.sqrt() / 4.0, epsilon = 1e-14);
        assert_abs_diff_eq!(a.exact_noncentrality, 4.0, epsilon = 1e-12);
        let mu = a.mean_vector();
        assert_abs_diff_eq!(16.0 * sigma.inv_quad_form(&mu).unwrap(), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn oracle_size_under_null() {
        let cfg = PowerConfig {
            n: 30,
            sigma: SymPd::identity(3),
            delta: DVector::zeros(3),
            alpha: 0.05,
            replicates: 4000,
            seed: 17,
            method: TestMethod::Oracle,
        };
        let r = power_simulation(&cfg, Parallelism::default()).unwrap();
        assert!((r.rejection_rate - 0.05).abs() < 3.0 * (0.05f64 * 0.95 / 4000.0).sqrt());
        assert_abs_diff_eq!(r.predicted_power, 0.05, epsilon = 1e-9);
    }

    #[test]
    fn power_simulation_is_thread_count_invariant() {
        let cfg = PowerConfig {
            n: 20,
            sigma: SymPd::from_diagonal(&[2.0, 1.0]).unwrap(),
            delta: DVector::from_vec(vec![1.0, 0.5]),
            alpha: 0.05,
            replicates: 100,
            seed: 3,
            method: TestMethod::Decomposite,
        };
        let a = power_simulation(&cfg, Parallelism::serial()).unwrap();
        let b = power_simulation(&cfg, Parallelism::threads(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn two_sample_ks_examples() {
        assert_eq!(two_sample_ks(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(two_sample_ks(&[1.0, 2.0], &[3.0, 4.0]), 1.0);
        assert_abs_diff_eq!(two_sample_ks(&[1.0, 3.0], &[2.0, 4.0]), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn decomposite_approaches_oracle_for_small_c() {
        let d = decomposite_oracle_gap(
            400,
            &SymPd::identity(2),
            &DVector::zeros(2),
            400,
            9,
            Parallelism::default(),
        )
        .unwrap();
        assert!(d < 0.1, "{d}");
    }
}
