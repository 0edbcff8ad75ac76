//! Random-matrix layer: Stieltjes transforms, the Marchenko-Pastur law for an
//! identity population, and the sample-to-population quantile map.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::TIE_TOL;

/// Guard on the quantile map denominator.
pub const QUANTILE_EPS: f64 = 1e-10;
/// Absolute tolerance requested from the CDF quadrature.
pub const CDF_TOL: f64 = 1e-8;

/// Marchenko-Pastur law for `Σ = I` with concentration `c = p/n ∈ (0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpModel {
    pub c: f64,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
}

impl MpModel {
    pub fn new(c: f64) -> Result<Self> {
        if !(c > 0.0 && c < 1.0) {
            return Err(Error::Domain(format!("concentration {c} must lie in (0, 1)")));
        }
        let r = c.sqrt();
        Ok(Self {
            c,
            lambda_minus: (1.0 - r).powi(2),
            lambda_plus: (1.0 + r).powi(2),
        })
    }

    pub fn from_dims(p: usize, n: usize) -> Result<Self> {
        Self::new(p as f64 / n as f64)
    }

    fn width(&self) -> f64 {
        self.lambda_plus - self.lambda_minus
    }

    /// `√((x−λ₋)(λ₊−x)) / (2πcx)` inside the support, zero elsewhere.
    pub fn density(&self, x: f64) -> f64 {
        if x <= self.lambda_minus || x >= self.lambda_plus {
            return 0.0;
        }
        ((x - self.lambda_minus) * (self.lambda_plus - x)).sqrt() / (2.0 * PI * self.c * x)
    }

    /// CDF by adaptive quadrature in `θ`, where `x = λ₋ + (λ₊−λ₋) sin²θ`.
    ///
    /// The substitution cancels both square-root edges, leaving the smooth
    /// integrand `w² sin²θ cos²θ / (π c x(θ))`.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        if x <= self.lambda_minus {
            return Ok(0.0);
        }
        if x >= self.lambda_plus {
            return Ok(1.0);
        }
        let w = self.width();
        let theta = ((x - self.lambda_minus) / w).sqrt().asin();
        let integrand = |t: f64| {
            let (s, c) = t.sin_cos();
            let xt = self.lambda_minus + w * s * s;
            w * w * s * s * c * c / (PI * self.c * xt)
        };
        let v = adaptive_simpson(&integrand, 0.0, theta, CDF_TOL * 1e-3)?;
        Ok(v.clamp(0.0, 1.0))
    }

    /// Principal-value Hilbert transform `(1 − c − x) / (2cx)`.
    pub fn identity_hilbert(&self, x: f64) -> Result<f64> {
        if x == 0.0 {
            return Err(Error::Domain("Hilbert transform is undefined at x = 0".into()));
        }
        Ok((1.0 - self.c - x) / (2.0 * self.c * x))
    }

    /// Boundary value `(1 − c − x + i√((x−λ₋)(λ₊−x))) / (2cx)` of the Stieltjes
    /// transform on the real axis, valid inside the support.
    pub fn boundary_stieltjes(&self, x: f64) -> Result<Complex64> {
        let re = self.identity_hilbert(x)?;
        let disc = (x - self.lambda_minus) * (self.lambda_plus - x);
        let im = if disc > 0.0 {
            disc.sqrt() / (2.0 * self.c * x)
        } else {
            0.0
        };
        Ok(Complex64::new(re, im))
    }

    /// Closed-form Stieltjes transform `m(z)` for `z ∈ C⁺`.
    pub fn stieltjes(&self, z: Complex64) -> Result<Complex64> {
        if !(z.im > 0.0) {
            return Err(Error::Domain(format!("z = {z} is not in the upper half-plane")));
        }
        let c = self.c;
        let b = Complex64::new(1.0 - c, 0.0) - z;
        let disc = ((z - Complex64::new(1.0 + c, 0.0)).powi(2) - 4.0 * c).sqrt();
        let two_cz = 2.0 * c * z;
        let m1 = (b + disc) / two_cz;
        let m2 = (b - disc) / two_cz;
        // the Stieltjes transform of a measure on R maps C⁺ into C⁺
        Ok(if m1.im > 0.0 { m1 } else { m2 })
    }

    /// Residual of the Marchenko-Pastur equation with a point-mass population at 1:
    /// `m − 1 / (1 − c − c z m − z)`.
    pub fn equation_residual(&self, z: Complex64) -> Result<Complex64> {
        let m = self.stieltjes(z)?;
        let c = self.c;
        Ok(m - 1.0 / (Complex64::new(1.0 - c, 0.0) - c * z * m - z))
    }
}

fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    const MAX_DEPTH: u32 = 50;

    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Option<f64> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol {
            return Some(left + right + delta / 15.0);
        }
        if depth == 0 {
            return None;
        }
        Some(
            recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?
                + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?,
        )
    }

    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(fa, fm, fb, a, b);
    recurse(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
        .ok_or_else(|| Error::Numeric(format!("quadrature on [{a}, {b}] did not converge")))
}

/// Empirical Stieltjes transform `(1/p) Σ 1/(l_i − z)`.
pub fn empirical_stieltjes(eigvals: &[f64], z: Complex64) -> Result<Complex64> {
    if !(z.im > 0.0) {
        return Err(Error::Domain(format!("z = {z} is not in the upper half-plane")));
    }
    if eigvals.is_empty() {
        return Err(Error::Domain("no eigenvalues".into()));
    }
    let sum: Complex64 = eigvals.iter().map(|&l| 1.0 / (Complex64::new(l, 0.0) - z)).sum();
    Ok(sum / eigvals.len() as f64)
}

/// Naive Hilbert-transform estimate `(1/p) Σ_{j≠i} 1/(l_j − l_i)` at a sample eigenvalue.
///
/// `i` is zero-based.
pub fn naive_hilbert(l: &[f64], i: usize) -> Result<f64> {
    let p = l.len();
    if i >= p {
        return Err(Error::Domain(format!("index {i} out of range for {p} eigenvalues")));
    }
    let scale = l.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut sum = 0.0;
    for (j, &lj) in l.iter().enumerate() {
        if j == i {
            continue;
        }
        let gap = lj - l[i];
        if gap.abs() <= TIE_TOL * scale {
            return Err(Error::EigenvalueTie {
                first: i.min(j),
                second: i.max(j),
                value: l[i],
            });
        }
        sum += 1.0 / gap;
    }
    Ok(sum / p as f64)
}

/// Population quantile `l / (1 − c − c·l·h)` implied by a sample quantile `l`
/// and a Hilbert-transform value `h` at `l`.
pub fn quantile_map(l: f64, c: f64, hilbert_value: f64) -> Result<f64> {
    let denominator = 1.0 - c - c * l * hilbert_value;
    if denominator <= QUANTILE_EPS {
        return Err(Error::QuantileSingularity { denominator });
    }
    Ok(l / denominator)
}

/// Rank `⌊p(1−α)⌋` clamped to `[1, p]` (one-based).
pub fn quantile_index(p: usize, alpha: f64) -> Result<usize> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("level {alpha} must lie in (0, 1)")));
    }
    if p == 0 {
        return Err(Error::Domain("dimension must be positive".into()));
    }
    let raw = (p as f64 * (1.0 - alpha)).floor() as usize;
    Ok(raw.clamp(1, p))
}

/// Kolmogorov-Smirnov distance between the empirical spectral CDF of
/// `eigvals` and the model CDF, checked on both sides of every jump.
pub fn ks_distance(eigvals: &[f64], model: &MpModel) -> Result<f64> {
    if eigvals.is_empty() {
        return Err(Error::Domain("no eigenvalues".into()));
    }
    let mut sorted = eigvals.to_vec();
    sorted.sort_by(f64::total_cmp);
    let p = sorted.len() as f64;
    let mut worst = 0.0f64;
    for (k, &x) in sorted.iter().enumerate() {
        let f = model.cdf(x)?;
        worst = worst.max((f - k as f64 / p).abs()).max(((k + 1) as f64 / p - f).abs());
    }
    Ok(worst)
}
