//! Population models, Gaussian data generation, and reproducible experiments.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{estimate_from_scatter, tsai_shrink, DataMatrix, Method, NConvention, ScatterMatrix};
use crate::io::serde_matrix;
use crate::loss_risk::{loss_target, min_risk, stein_loss, RiskKind};
use crate::matrix::{spectral_decompose, SymPd};
use crate::rmt::{ks_distance, MpModel};
use crate::runner::{mean_and_se, run_replicates, Parallelism, MAX_FAILURE_FRACTION};

/// Population covariance structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PopulationModel {
    Identity {
        p: usize,
    },
    /// `diag(spikes, 1, …, 1)`.
    Spiked {
        p: usize,
        spikes: Vec<f64>,
    },
    /// Entries `ρ^|i−j|`.
    Ar1 {
        p: usize,
        rho: f64,
    },
    Explicit {
        #[serde(with = "serde_matrix")]
        matrix: DMatrix<f64>,
    },
}

impl PopulationModel {
    pub fn p(&self) -> usize {
        match self {
            PopulationModel::Identity { p } | PopulationModel::Spiked { p, .. } | PopulationModel::Ar1 { p, .. } => *p,
            PopulationModel::Explicit { matrix } => matrix.nrows(),
        }
    }

    /// Parses `identity`, `ar1:<rho>` or `spiked:<s1>,<s2>,…` for dimension `p`.
    pub fn parse(spec: &str, p: usize) -> Result<Self> {
        let (name, arg) = spec.split_once(':').unwrap_or((spec, ""));
        let model = match name.trim() {
            "identity" => PopulationModel::Identity { p },
            "ar1" => PopulationModel::Ar1 {
                p,
                rho: arg
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad ar1 coefficient {arg:?}")))?,
            },
            "spiked" => PopulationModel::Spiked {
                p,
                spikes: arg
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| {
                        s.trim()
                            .parse()
                            .map_err(|_| Error::Config(format!("bad spike value {s:?}")))
                    })
                    .collect::<Result<_>>()?,
            },
            other => return Err(Error::Config(format!("unknown population model {other:?}"))),
        };
        Ok(model)
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, PopulationModel::Identity { .. })
            || matches!(self, PopulationModel::Ar1 { rho, .. } if *rho == 0.0)
    }
}

/// Builds Σ for a population model.
pub fn make_sigma(model: &PopulationModel) -> Result<SymPd> {
    match model {
        PopulationModel::Identity { p } => {
            require_dim(*p)?;
            Ok(SymPd::identity(*p))
        }
        PopulationModel::Spiked { p, spikes } => {
            require_dim(*p)?;
            if spikes.len() > *p {
                return Err(Error::Config(format!("{} spikes exceed dimension {p}", spikes.len())));
            }
            if let Some(s) = spikes.iter().find(|s| !(s.is_finite() && **s >= 1.0)) {
                return Err(Error::Config(format!("spike value {s} must be at least 1")));
            }
            let mut diag = vec![1.0; *p];
            diag[..spikes.len()].copy_from_slice(spikes);
            SymPd::from_diagonal(&diag)
        }
        PopulationModel::Ar1 { p, rho } => {
            require_dim(*p)?;
            if !(rho.abs() < 1.0) {
                return Err(Error::Config(format!("AR(1) coefficient {rho} must satisfy |rho| < 1")));
            }
            SymPd::new(DMatrix::from_fn(*p, *p, |i, j| rho.powi(i.abs_diff(j) as i32)))
        }
        PopulationModel::Explicit { matrix } => SymPd::new(matrix.clone()),
    }
}

fn require_dim(p: usize) -> Result<()> {
    if p == 0 {
        return Err(Error::Config("dimension must be positive".into()));
    }
    Ok(())
}

/// Descending population eigenvalues `γ_1 ≥ … ≥ γ_p`.
pub fn population_eigenvalues(sigma: &SymPd) -> Result<Vec<f64>> {
    Ok(spectral_decompose(sigma)?.eigenvalues.as_slice().to_vec())
}

/// Rows `μ + T zᵢ` with `Σ = TTᵀ` and `zᵢ` iid from `dist` (standardized).
pub fn sample_standardized_with<D, R>(
    sigma: &SymPd,
    n: usize,
    mean: Option<&DVector<f64>>,
    dist: &D,
    rng: &mut R,
) -> Result<DataMatrix>
where
    D: Distribution<f64>,
    R: Rng + ?Sized,
{
    let p = sigma.dim();
    if let Some(m) = mean {
        if m.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                actual: m.len(),
            });
        }
    }
    // row-major draw order so the stream does not depend on matrix storage
    let mut z = DMatrix::<f64>::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            z[(i, j)] = dist.sample(rng);
        }
    }
    let mut x = z * sigma.factor().matrix().transpose();
    if let Some(m) = mean {
        let mt = m.transpose();
        for mut row in x.row_iter_mut() {
            row += &mt;
        }
    }
    DataMatrix::new(x)
}

/// Gaussian rows `N(μ, Σ)` using the Cholesky factor as the square root of Σ.
pub fn sample_gaussian_with<R: Rng + ?Sized>(
    sigma: &SymPd,
    n: usize,
    mean: Option<&DVector<f64>>,
    rng: &mut R,
) -> Result<DataMatrix> {
    sample_standardized_with(sigma, n, mean, &StandardNormal, rng)
}

/// `n` iid `N(0, Σ)` rows; identical output for identical `seed`.
pub fn sample_gaussian(sigma: &SymPd, n: usize, seed: u64) -> Result<DataMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_gaussian_with(sigma, n, None, &mut rng)
}

/// Haar-distributed orthogonal matrix from the QR factorization of a Gaussian matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(p: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..p {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    EigenvalueRecovery,
    EsdFit,
    RiskComparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub model: PopulationModel,
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub retain_rows: bool,
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

/// Largest concentration accepted by the ESD experiment.
pub const ESD_MAX_CONCENTRATION: f64 = 0.99;

impl ExperimentConfig {
    pub fn p(&self) -> usize {
        self.model.p()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, p) = (self.n, self.p());
        if self.replicates < 1 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if p == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        match self.kind {
            ExperimentKind::EigenvalueRecovery => {
                if n <= p {
                    return Err(Error::Config(format!("need n > p, got n={n}, p={p}")));
                }
            }
            ExperimentKind::EsdFit => {
                if !self.model.is_identity() {
                    return Err(Error::Config("the ESD fit needs an identity population".into()));
                }
                if n <= p {
                    return Err(Error::Config(format!("need n > p, got n={n}, p={p}")));
                }
                let c = p as f64 / n as f64;
                if c > ESD_MAX_CONCENTRATION {
                    return Err(Error::Config(format!(
                        "concentration {c} exceeds {ESD_MAX_CONCENTRATION}"
                    )));
                }
            }
            ExperimentKind::RiskComparison => {
                if n < p {
                    return Err(Error::Config(format!("need n ≥ p, got n={n}, p={p}")));
                }
                if self.methods.is_empty() {
                    return Err(Error::Config("no methods selected".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub name: String,
    pub mean: f64,
    pub std_error: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub index: usize,
    pub values: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub metrics: Vec<MetricSummary>,
    /// Closed-form or analytic reference values for the metrics.
    pub reference: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<ReplicateRow>>,
    pub failures: Vec<FailureRecord>,
    pub wall_clock_secs: f64,
}

impl ExperimentReport {
    pub fn metric(&self, name: &str) -> Option<&MetricSummary> {
        self.metrics.iter().find(|m| m.name == name)
    }
}

/// Aggregates every metric name present in `rows`, in replicate order.
pub fn summarize(rows: &[ReplicateRow]) -> Vec<MetricSummary> {
    let mut columns: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for row in rows {
        for (k, v) in &row.values {
            columns.entry(k.as_str()).or_default().push(*v);
        }
    }
    columns
        .into_iter()
        .map(|(name, values)| {
            let (mean, std_error) = mean_and_se(&values);
            MetricSummary {
                name: name.to_string(),
                mean,
                std_error,
                count: values.len(),
            }
        })
        .collect()
}

type ReplicateOutcome = (ReplicateRow, Vec<FailureRecord>);

fn finish(
    config: &ExperimentConfig,
    outcomes: Vec<ReplicateOutcome>,
    reference: BTreeMap<String, f64>,
    started: Instant,
) -> ExperimentReport {
    let mut rows = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for (row, f) in outcomes {
        rows.push(row);
        failures.extend(f);
    }
    ExperimentReport {
        config: config.clone(),
        metrics: summarize(&rows),
        reference,
        rows: config.retain_rows.then_some(rows),
        failures,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    }
}

fn mean_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Per replicate: MAE of shrunk and of raw sample eigenvalues against the true
/// descending population eigenvalues, and the relative Frobenius distance
/// between the shrinkage estimator and `S`. Mean-zero data, divisor `n`.
pub fn eigenvalue_recovery_experiment(config: &ExperimentConfig, parallelism: Parallelism) -> Result<ExperimentReport> {
    config.validate()?;
    let started = Instant::now();
    let sigma = make_sigma(&config.model)?;
    let gamma = population_eigenvalues(&sigma)?;
    let n = config.n;
    let outcomes = run_replicates(config.replicates, config.seed, parallelism, |index, rng| {
        let mut values = BTreeMap::new();
        let mut failures = Vec::new();
        let fail = |e: Error| FailureRecord {
            index,
            method: Some(Method::Tsai),
            message: e.to_string(),
        };
        let mut step = || -> Result<(SymPd, crate::matrix::SpectralDecomp)> {
            let x = sample_gaussian_with(&sigma, n, None, rng)?;
            let s = SymPd::new(x.cross_product(false) / n as f64)?;
            let d = spectral_decompose(&s)?;
            Ok((s, d))
        };
        match step() {
            Ok((s, decomp)) => {
                let l = decomp.eigenvalues.as_slice();
                values.insert("mae_sample".to_string(), mean_abs_diff(l, &gamma));
                match tsai_shrink(&decomp, n) {
                    Ok(table) => {
                        values.insert(
                            "mae_shrunk".to_string(),
                            mean_abs_diff(&table.shrunk_eigenvalues, &gamma),
                        );
                        let t = decomp.compose(&table.shrunk_eigenvalues);
                        values.insert(
                            "rel_frobenius_tsai_vs_sample".to_string(),
                            (&t - s.matrix()).norm() / s.matrix().norm(),
                        );
                        values.insert(
                            "order_preserved".to_string(),
                            f64::from(u8::from(table.preserves_order())),
                        );
                    }
                    Err(e) => failures.push(fail(e)),
                }
            }
            Err(e) => failures.push(FailureRecord {
                index,
                method: None,
                message: e.to_string(),
            }),
        }
        (ReplicateRow { index, values }, failures)
    })?;
    let mut reference = BTreeMap::new();
    reference.insert("gamma_max".to_string(), gamma[0]);
    reference.insert("gamma_min".to_string(), *gamma.last().expect("p ≥ 1"));
    reference.insert("concentration".to_string(), config.p() as f64 / n as f64);
    Ok(finish(config, outcomes, reference, started))
}

/// One point of a fixed-concentration recovery grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryPoint {
    pub p: usize,
    pub n: usize,
    pub mae_sample: Option<f64>,
    pub mae_shrunk: Option<f64>,
    pub shrinkage_failures: usize,
    /// `mae_shrunk < mae_sample`; false when no replicate produced a shrunk spectrum.
    pub shrunk_better: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryGrid {
    pub concentration: f64,
    pub seed: u64,
    pub points: Vec<RecoveryPoint>,
    /// Whether the shrunk MAE decreases along increasing `p`; `None` when
    /// some point has no shrunk spectrum.
    pub mae_shrunk_decreasing: Option<bool>,
    pub reports: Vec<ExperimentReport>,
}

/// Runs the recovery experiment on `(p, n)` pairs of an identity population.
pub fn eigenvalue_recovery_grid(
    dims: &[(usize, usize)],
    replicates: usize,
    seed: u64,
    parallelism: Parallelism,
) -> Result<RecoveryGrid> {
    let mut points = Vec::new();
    let mut reports = Vec::new();
    for &(p, n) in dims {
        let config = ExperimentConfig {
            kind: ExperimentKind::EigenvalueRecovery,
            model: PopulationModel::Identity { p },
            n,
            replicates,
            seed,
            methods: vec![Method::Tsai],
            retain_rows: false,
        };
        let report = eigenvalue_recovery_experiment(&config, parallelism)?;
        let mae_sample = report.metric("mae_sample").map(|m| m.mean);
        let mae_shrunk = report.metric("mae_shrunk").map(|m| m.mean);
        points.push(RecoveryPoint {
            p,
            n,
            mae_sample,
            mae_shrunk,
            shrinkage_failures: report.failures.len(),
            shrunk_better: matches!((mae_shrunk, mae_sample), (Some(a), Some(b)) if a < b),
        });
        reports.push(report);
    }
    let shrunk: Option<Vec<f64>> = points.iter().map(|pt| pt.mae_shrunk).collect();
    let concentration = dims.first().map_or(f64::NAN, |&(p, n)| p as f64 / n as f64);
    Ok(RecoveryGrid {
        concentration,
        seed,
        mae_shrunk_decreasing: shrunk.map(|v| v.windows(2).all(|w| w[1] < w[0])),
        points,
        reports,
    })
}

/// Kolmogorov-Smirnov distance between the spectrum of `S` and the
/// Marchenko-Pastur CDF at `c = p/n`, per replicate.
pub fn esd_fit_experiment(config: &ExperimentConfig, parallelism: Parallelism) -> Result<ExperimentReport> {
    config.validate()?;
    let started = Instant::now();
    let (p, n) = (config.p(), config.n);
    let model = MpModel::from_dims(p, n)?;
    let sigma = SymPd::identity(p);
    let outcomes = run_replicates(config.replicates, config.seed, parallelism, |index, rng| {
        let mut step = || -> Result<f64> {
            let x = sample_gaussian_with(&sigma, n, None, rng)?;
            let s = (x.cross_product(false) / n as f64).symmetric_eigenvalues();
            ks_distance(s.as_slice(), &model)
        };
        let mut values = BTreeMap::new();
        let mut failures = Vec::new();
        match step() {
            Ok(ks) => {
                values.insert("ks_distance".to_string(), ks);
            }
            Err(e) => failures.push(FailureRecord {
                index,
                method: None,
                message: e.to_string(),
            }),
        }
        (ReplicateRow { index, values }, failures)
    })?;
    let mut reference = BTreeMap::new();
    reference.insert("concentration".to_string(), model.c);
    reference.insert("lambda_minus".to_string(), model.lambda_minus);
    reference.insert("lambda_plus".to_string(), model.lambda_plus);
    Ok(finish(config, outcomes, reference, started))
}

fn loss_key(method: Method) -> String {
    format!("loss_{}", method.name())
}

/// Monte Carlo Stein risk of each selected estimator on common data sets,
/// with the closed-form minimum risks as reference. The pivot-diagonal
/// estimator is scored against the pivot diagonal of Σ.
///
/// A method failing in more than 1% of replicates is dropped from the metrics
/// and reported in `failures`.
pub fn risk_comparison_experiment(config: &ExperimentConfig, parallelism: Parallelism) -> Result<ExperimentReport> {
    config.validate()?;
    let started = Instant::now();
    let sigma = make_sigma(&config.model)?;
    let (p, n) = (config.p(), config.n);
    let targets: Vec<(Method, SymPd)> = config
        .methods
        .iter()
        .map(|&m| Ok((m, loss_target(m, &sigma)?)))
        .collect::<Result<_>>()?;
    let outcomes = run_replicates(config.replicates, config.seed, parallelism, |index, rng| {
        let mut values = BTreeMap::new();
        let mut failures = Vec::new();
        let scatter = sample_gaussian_with(&sigma, n, None, rng)
            .and_then(|x| ScatterMatrix::from_data(&x, NConvention::Uncentered));
        match scatter {
            Ok(a) => {
                for (method, target) in &targets {
                    let loss = estimate_from_scatter(&a, *method)
                        .and_then(|e| e.to_sym_pd())
                        .and_then(|phi| stein_loss(&phi, target));
                    match loss {
                        Ok(v) => {
                            values.insert(loss_key(*method), v);
                        }
                        Err(e) => failures.push(FailureRecord {
                            index,
                            method: Some(*method),
                            message: e.to_string(),
                        }),
                    }
                }
            }
            Err(e) => failures.push(FailureRecord {
                index,
                method: None,
                message: e.to_string(),
            }),
        }
        (ReplicateRow { index, values }, failures)
    })?;

    let mut report = finish(config, outcomes, BTreeMap::new(), started);
    for kind in RiskKind::ALL {
        let key = match kind {
            RiskKind::Ml => "min_risk_ml",
            RiskKind::Stein => "min_risk_stein",
            RiskKind::Dp => "min_risk_dp",
        };
        report.reference.insert(key.to_string(), min_risk(kind, n, p)?);
    }
    let total = config.replicates;
    for &method in &config.methods {
        let failed = report
            .failures
            .iter()
            .filter(|f| f.method == Some(method) || f.method.is_none())
            .count();
        if failed > 0 && failed as f64 > MAX_FAILURE_FRACTION * total as f64 {
            let key = loss_key(method);
            report.metrics.retain(|m| m.name != key);
            report.failures.push(FailureRecord {
                index: total,
                method: Some(method),
                message: format!("aborted: {failed} of {total} replicates failed"),
            });
        }
    }
    Ok(report)
}

/// Dispatches on the experiment kind.
pub fn run_experiment(config: &ExperimentConfig, parallelism: Parallelism) -> Result<ExperimentReport> {
    match config.kind {
        ExperimentKind::EigenvalueRecovery => eigenvalue_recovery_experiment(config, parallelism),
        ExperimentKind::EsdFit => esd_fit_experiment(config, parallelism),
        ExperimentKind::RiskComparison => risk_comparison_experiment(config, parallelism),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;

    fn config(kind: ExperimentKind, model: PopulationModel, n: usize, replicates: usize) -> ExperimentConfig {
        ExperimentConfig {
            kind,
            model,
            n,
            replicates,
            seed: 12,
            methods: Method::ALL.to_vec(),
            retain_rows: true,
        }
    }

    #[test]
    fn make_sigma_examples() {
        assert_eq!(
            make_sigma(&PopulationModel::Identity { p: 3 }).unwrap(),
            SymPd::identity(3)
        );
        assert_eq!(
            make_sigma(&PopulationModel::Ar1 { p: 4, rho: 0.0 }).unwrap().matrix(),
            &DMatrix::identity(4, 4)
        );
        let s = make_sigma(&PopulationModel::Ar1 { p: 2, rho: 0.5 }).unwrap();
        assert_eq!(s.matrix(), &dmatrix![1.0, 0.5; 0.5, 1.0]);
        let ev = population_eigenvalues(&s).unwrap();
        assert_abs_diff_eq!(ev[0], 1.5, epsilon = 1e-14);
        assert_abs_diff_eq!(ev[1], 0.5, epsilon = 1e-14);
        let sp = make_sigma(&PopulationModel::Spiked {
            p: 4,
            spikes: vec![5.0, 2.0],
        })
        .unwrap();
        assert_eq!(sp.matrix().diagonal().as_slice(), &[5.0, 2.0, 1.0, 1.0]);
    }

    #[test]
    fn make_sigma_rejects_invalid_models() {
        assert!(make_sigma(&PopulationModel::Ar1 { p: 3, rho: 1.0 }).is_err());
        assert!(make_sigma(&PopulationModel::Spiked {
            p: 3,
            spikes: vec![0.5]
        })
        .is_err());
        assert!(make_sigma(&PopulationModel::Spiked {
            p: 1,
            spikes: vec![2.0, 3.0]
        })
        .is_err());
        assert!(make_sigma(&PopulationModel::Explicit {
            matrix: dmatrix![1.0, 2.0; 2.0, 1.0]
        })
        .is_err());
    }

    #[test]
    fn ar1_spectrum_lies_in_toeplitz_bounds() {
        for &rho in &[-0.9, -0.5, 0.2, 0.5, 0.8, 0.95] {
            for &p in &[2usize, 7, 30, 100] {
                let s = make_sigma(&PopulationModel::Ar1 { p, rho }).unwrap();
                let lo = (1.0 - f64::abs(rho)) / (1.0 + f64::abs(rho));
                let hi = (1.0 + f64::abs(rho)) / (1.0 - f64::abs(rho));
                for v in population_eigenvalues(&s).unwrap() {
                    assert!(v >= lo - 1e-10 && v <= hi + 1e-10, "rho={rho} p={p} v={v}");
                }
            }
        }
    }

    #[test]
    fn parse_population_models() {
        assert_eq!(
            PopulationModel::parse("identity", 3).unwrap(),
            PopulationModel::Identity { p: 3 }
        );
        assert_eq!(
            PopulationModel::parse("ar1:0.5", 3).unwrap(),
            PopulationModel::Ar1 { p: 3, rho: 0.5 }
        );
        assert_eq!(
            PopulationModel::parse("spiked:5,3", 4).unwrap(),
            PopulationModel::Spiked {
                p: 4,
                spikes: vec![5.0, 3.0]
            }
        );
        assert!(PopulationModel::parse("toeplitz", 3).is_err());
        assert!(PopulationModel::parse("ar1:x", 3).is_err());
    }

    #[test]
    fn gaussian_sampling_is_deterministic() {
        let s = SymPd::from_diagonal(&[2.0, 1.0]).unwrap();
        assert_eq!(sample_gaussian(&s, 50, 3).unwrap(), sample_gaussian(&s, 50, 3).unwrap());
        assert_ne!(sample_gaussian(&s, 50, 3).unwrap(), sample_gaussian(&s, 50, 4).unwrap());
    }

    #[test]
    fn gaussian_sampling_moments() {
        let x = sample_gaussian(&SymPd::identity(1), 1_000_000, 1).unwrap();
        let s = x.cross_product(true) / (x.n() - 1) as f64;
        assert!((s[(0, 0)] - 1.0).abs() < 0.01);
        assert!(x.mean()[0].abs() < 0.01);

        let x = sample_gaussian(&SymPd::from_diagonal(&[4.0, 1.0]).unwrap(), 100_000, 2).unwrap();
        let s = x.cross_product(true) / (x.n() - 1) as f64;
        assert!((s[(0, 0)] / 4.0 - 1.0).abs() < 0.05);
        assert!((s[(1, 1)] - 1.0).abs() < 0.05);
        assert!(s[(0, 1)].abs() < 0.05);
    }

    #[test]
    fn mean_shift_is_applied() {
        let mu = DVector::from_vec(vec![3.0, -1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = sample_gaussian_with(&SymPd::identity(2), 20_000, Some(&mu), &mut rng).unwrap();
        assert!((x.mean() - mu).amax() < 0.05);
    }

    #[test]
    fn random_orthogonal_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = random_orthogonal(7, &mut rng);
        assert!((q.transpose() * &q - DMatrix::identity(7, 7)).amax() < 1e-12);
    }

    #[test]
    fn recovery_small_c_regime() {
        let cfg = config(
            ExperimentKind::EigenvalueRecovery,
            PopulationModel::Identity { p: 5 },
            5000,
            10,
        );
        let r = eigenvalue_recovery_experiment(&cfg, Parallelism::default()).unwrap();
        assert!(r.metric("mae_sample").unwrap().mean < 0.1);
        assert!(r.metric("mae_shrunk").unwrap().mean < 0.1);
    }

    #[test]
    fn recovery_small_c_frobenius_with_separated_spectrum() {
        let p = 5;
        for &n in &[500usize, 5000] {
            let cfg = config(
                ExperimentKind::EigenvalueRecovery,
                PopulationModel::Spiked {
                    p,
                    spikes: vec![16.0, 8.0, 4.0, 2.0],
                },
                n,
                10,
            );
            let r = eigenvalue_recovery_experiment(&cfg, Parallelism::default()).unwrap();
            let rows = r.rows.as_ref().unwrap();
            for row in rows {
                let d = row.values["rel_frobenius_tsai_vs_sample"];
                assert!(d < 2.0 * p as f64 / n as f64, "n={n}: {d}");
            }
        }
    }

    #[test]
    fn recovery_identity_deviation_is_order_root_n() {
        // With tied population eigenvalues the sample gaps are O(n^-1/2), so the
        // shrinkage moves S by O(n^-1/2) rather than O(p/n).
        let cfg = config(
            ExperimentKind::EigenvalueRecovery,
            PopulationModel::Identity { p: 5 },
            5000,
            10,
        );
        let r = eigenvalue_recovery_experiment(&cfg, Parallelism::default()).unwrap();
        let d = r.metric("rel_frobenius_tsai_vs_sample").unwrap().mean;
        assert!(d > 2.0 * 5.0 / 5000.0);
        assert!(d < 5.0 / (5000f64).sqrt());
    }

    #[test]
    fn recovery_large_c_reports_spreading() {
        let cfg = config(
            ExperimentKind::EigenvalueRecovery,
            PopulationModel::Identity { p: 200 },
            400,
            2,
        );
        let r = eigenvalue_recovery_experiment(&cfg, Parallelism::default()).unwrap();
        let mae_l = r.metric("mae_sample").unwrap().mean;
        // E|l − 1| under the c = 0.5 Marchenko-Pastur law is about 0.59
        assert!(mae_l > 0.5 && mae_l < 0.7, "{mae_l}");
        assert_eq!(r.failures.len() + r.metric("mae_shrunk").map_or(0, |m| m.count), 2);
    }

    #[test]
    fn recovery_p1_errors_coincide() {
        let cfg = config(
            ExperimentKind::EigenvalueRecovery,
            PopulationModel::Identity { p: 1 },
            30,
            5,
        );
        let r = eigenvalue_recovery_experiment(&cfg, Parallelism::default()).unwrap();
        for row in r.rows.unwrap() {
            assert_eq!(row.values["mae_sample"], row.values["mae_shrunk"]);
        }
    }

    #[test]
    fn esd_fit_examples() {
        let cfg = config(ExperimentKind::EsdFit, PopulationModel::Identity { p: 40 }, 160, 3);
        let r = esd_fit_experiment(&cfg, Parallelism::default()).unwrap();
        for row in r.rows.unwrap() {
            assert!(row.values["ks_distance"] < 0.15);
        }
        let bad = config(ExperimentKind::EsdFit, PopulationModel::Identity { p: 999 }, 1000, 1);
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = config(ExperimentKind::EsdFit, PopulationModel::Identity { p: 10 }, 10, 1);
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = config(ExperimentKind::EsdFit, PopulationModel::Ar1 { p: 10, rho: 0.3 }, 100, 1);
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn risk_comparison_p1_methods_coincide() {
        let cfg = config(
            ExperimentKind::RiskComparison,
            PopulationModel::Identity { p: 1 },
            10,
            500,
        );
        let r = risk_comparison_experiment(&cfg, Parallelism::default()).unwrap();
        let means: Vec<&MetricSummary> = Method::ALL.iter().map(|m| r.metric(&loss_key(*m)).unwrap()).collect();
        for m in &means {
            assert!((m.mean - means[0].mean).abs() <= 3.0 * means[0].std_error + 1e-12);
        }
    }

    #[test]
    fn closed_form_ordering_over_grid() {
        for n in 1..=100usize {
            for p in 1..=n {
                let ml = min_risk(RiskKind::Ml, n, p).unwrap();
                let st = min_risk(RiskKind::Stein, n, p).unwrap();
                let dp = min_risk(RiskKind::Dp, n, p).unwrap();
                assert!(dp <= st && st <= ml);
            }
        }
    }

    #[test]
    fn reports_are_deterministic_and_recomputable() {
        let cfg = config(
            ExperimentKind::RiskComparison,
            PopulationModel::Ar1 { p: 4, rho: 0.4 },
            20,
            64,
        );
        let mut a = risk_comparison_experiment(&cfg, Parallelism::serial()).unwrap();
        let mut b = risk_comparison_experiment(&cfg, Parallelism::threads(4)).unwrap();
        a.wall_clock_secs = 0.0;
        b.wall_clock_secs = 0.0;
        assert_eq!(a, b);
        let recomputed = summarize(a.rows.as_ref().unwrap());
        for m in &a.metrics {
            let r = recomputed.iter().find(|x| x.name == m.name).unwrap();
            assert!((r.mean - m.mean).abs() <= 1e-12);
            assert!((r.std_error - m.std_error).abs() <= 1e-12);
        }
    }
}
