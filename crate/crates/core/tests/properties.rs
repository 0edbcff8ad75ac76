use covshrink::estimators::{estimate, NConvention};
use covshrink::loss_risk::{min_risk, stein_loss, RiskKind};
use covshrink::rmt::MpModel;
use covshrink::sim::{make_sigma, random_orthogonal, sample_gaussian, PopulationModel};
use covshrink::{successive_diagonalize, tsai_eigenvalues, DataMatrix, Method, SymPd};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn spd(seed: u64, p: usize) -> SymPd {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = random_orthogonal(p, &mut rng);
    let d = DMatrix::from_fn(p, p, |i, j| if i == j { 0.5 + i as f64 } else { 0.0 });
    SymPd::new(&q * d * q.transpose()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stein_loss_is_congruence_invariant(seed in any::<u64>(), p in 1usize..6) {
        let phi = spd(seed, p);
        let sigma = spd(seed.wrapping_add(1), p);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let g = random_orthogonal(p, &mut rng) * DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 + j as f64 } else { 0.0 });
        let a = stein_loss(&phi, &sigma).unwrap();
        let b = stein_loss(
            &SymPd::new(&g * phi.matrix() * g.transpose()).unwrap(),
            &SymPd::new(&g * sigma.matrix() * g.transpose()).unwrap(),
        )
        .unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() < 1e-8 * a.max(1.0));
        prop_assert!(stein_loss(&sigma, &sigma).unwrap() < 1e-10);
    }

    #[test]
    fn shrinkage_of_separated_spectra_is_positive(
        mut l in prop::collection::vec(0.1f64..100.0, 1..8),
        extra in 0usize..200,
    ) {
        l.sort_by(|a, b| b.total_cmp(a));
        l.dedup_by(|a, b| (*a - *b).abs() < 1e-3 * *b);
        let n = l.len() + 1 + extra;
        if let Ok(t) = tsai_eigenvalues(&l, n) {
            prop_assert!(t.shrunk_eigenvalues.iter().all(|v| *v > 0.0 && v.is_finite()));
            prop_assert!(t.denominators.iter().all(|d| *d > 0.0));
            // each pair (i, j) contributes l_i/(l_i − l_j) + l_j/(l_j − l_i) = 1
            let sum: f64 = t.denominators.iter().sum();
            let p = l.len() as f64;
            prop_assert!((sum - p * (n as f64 - p + 1.0) - p * (p - 1.0) / 2.0).abs() < 1e-6 * sum.abs().max(1.0));
        }
    }

    #[test]
    fn schur_pivots_multiply_to_determinant(seed in any::<u64>(), p in 1usize..7) {
        let m = spd(seed, p);
        let r = successive_diagonalize(&m).unwrap();
        prop_assert!((r.log_determinant() - m.log_det()).abs() < 1e-9);
    }

    #[test]
    fn mp_cdf_is_monotone(c in 0.05f64..0.95, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let m = MpModel::new(c).unwrap();
        let span = m.lambda_plus - m.lambda_minus;
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let (x, y) = (m.lambda_minus + lo * span, m.lambda_minus + hi * span);
        prop_assert!(m.cdf(x).unwrap() <= m.cdf(y).unwrap() + 1e-12);
    }
}

#[test]
fn every_estimator_is_positive_definite_on_gaussian_data() {
    let sigma = make_sigma(&PopulationModel::Ar1 { p: 6, rho: 0.6 }).unwrap();
    for seed in 0..20 {
        let x: DataMatrix = sample_gaussian(&sigma, 40, seed).unwrap();
        for method in Method::ALL {
            for conv in [NConvention::Uncentered, NConvention::Centered] {
                if let Ok(e) = estimate(&x, method, conv) {
                    assert!(e.to_sym_pd().is_ok(), "{method} {conv:?} seed {seed}");
                }
            }
        }
    }
}

#[test]
fn closed_form_risks_grow_with_dimension() {
    for kind in RiskKind::ALL {
        let mut prev = 0.0;
        for p in 1..=30 {
            let r = min_risk(kind, 60, p).unwrap();
            assert!(r > prev);
            prev = r;
        }
    }
}
