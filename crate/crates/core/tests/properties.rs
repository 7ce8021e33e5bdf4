use photon_duration::arrival_stats::{mean_and_sigma, moments, MomentSet};
use photon_duration::dispersion::{f_diag, f_offdiag, DispersionModel, FiberMode, FiberParameters, RegularizationParameter};
use photon_duration::propagation::ArrivalDistribution;
use proptest::prelude::*;

fn massive(v: f64, om: f64) -> DispersionModel {
    DispersionModel::massive(v, om).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn f_is_symmetric_and_positive(v in 1e7..3e8f64, om in 1e13..1e16f64, k1 in 1e4..1e7f64, k2 in 1e4..1e7f64, e in 0.0..1e6f64) {
        prop_assume!((k1 - k2).abs() > 1e-6 * k1.max(k2));
        let m = massive(v, om);
        let eps = RegularizationParameter::new(e).unwrap();
        let f = f_offdiag(&m, k1, k2, eps).unwrap();
        prop_assert!(f > 0.0);
        let tol = 1e-9 * f;
        prop_assert!((f_offdiag(&m, k2, k1, eps).unwrap() - f).abs() <= tol);
        prop_assert!((f_offdiag(&m, -k1, k2, eps).unwrap() - f).abs() <= tol);
        prop_assert!((f_offdiag(&m, k1, -k2, eps).unwrap() - f).abs() <= tol);
    }

    #[test]
    fn f_approaches_its_diagonal(v in 1e7..3e8f64, om in 1e13..1e16f64, k in 1e4..1e7f64) {
        let m = massive(v, om);
        let d = f_diag(&m, k, RegularizationParameter::ZERO).unwrap();
        let off = f_offdiag(&m, k * (1.0 + 1e-6), k, RegularizationParameter::ZERO).unwrap();
        prop_assert!((off - d).abs() <= 1e-5 * d);
    }

    #[test]
    fn sigma_is_invariant_under_scaling_and_shift(c in 1e-3..1e3f64, shift in 0.0..50.0f64, width in 0.1..2.0f64) {
        let t: Vec<f64> = (0..2001).map(|i| shift + 10.0 * i as f64 / 2000.0).collect();
        let mid = shift + 5.0;
        let p: Vec<f64> = t.iter().map(|x| (-(x - mid).powi(2) / (2.0 * (width / 4.0).powi(2))).exp()).collect();
        let d = ArrivalDistribution::from_samples(1.0, t.clone(), p.clone(), 1.0, 1e-6, true).unwrap();
        let ms = moments(&d, 2).unwrap();
        let base = mean_and_sigma(&ms, 1.0).unwrap();
        let scaled = mean_and_sigma(&ms.scaled(c), 1.0).unwrap();
        prop_assert!((scaled.sigma - base.sigma).abs() <= 1e-10 * base.sigma);
        prop_assert!((base.sigma - width / 4.0).abs() <= 1e-6 * width);
        prop_assert!(ms.cauchy_schwarz_gap() >= 0.0);
    }
}

#[test]
fn fiber_f_symmetries_on_random_triples() {
    let fp = FiberParameters::new(4e-6, 1.0, 2.1025, 1.0, 2.085).unwrap();
    let m = DispersionModel::fiber(FiberMode::he11(fp).unwrap());
    let mut runner = proptest::test_runner::TestRunner::new(ProptestConfig::with_cases(24));
    runner
        .run(&(2e6..1.5e7f64, 2e6..1.5e7f64, 0.0..1e5f64), |(k1, k2, e)| {
            prop_assume!((k1 - k2).abs() > 1e-4 * k1);
            let eps = RegularizationParameter::new(e).unwrap();
            let f = f_offdiag(&m, k1, k2, eps).unwrap();
            prop_assert!(f > 0.0);
            prop_assert!((f_offdiag(&m, k2, k1, eps).unwrap() - f).abs() <= 1e-9 * f);
            prop_assert!((f_offdiag(&m, -k1, -k2, eps).unwrap() - f).abs() <= 1e-9 * f);
            Ok(())
        })
        .unwrap();
}

#[test]
fn raw_moments_reproduce_centered_ones() {
    let ms = MomentSet::from_raw(1.0, 2.0, 6.0, 20.0);
    let s = mean_and_sigma(&ms, 1.0).unwrap();
    assert!((s.t_mean - 3.0).abs() < 1e-15);
    assert!((s.sigma - 1.0).abs() < 1e-15);
}
