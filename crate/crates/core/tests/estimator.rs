//! Estimator behavior on simulated and exact inputs.

use hom_core::analytic::{self, ClickProbabilities};
use hom_core::estimator::{self, SinglesNormalization};
use hom_core::fock::{self, FockTruncation};
use hom_core::montecarlo::{run_protocol, RunPlan};
use hom_core::{Config, DetectorSpec, OpticsSpec, ProtocolSetting, SourceSpec};

fn cfg(mu: f64, delta: f64, r: f64, kappa: f64, dark: f64) -> Config {
    Config::new(
        SourceSpec::symmetric(mu, delta),
        OpticsSpec::new(r),
        DetectorSpec::symmetric(kappa, dark),
    )
    .unwrap()
}

fn oracle_protocol(c: &Config) -> [ClickProbabilities; 4] {
    ProtocolSetting::ALL.map(|s| {
        let cs = c.for_setting(s);
        let src = cs.source();
        fock::oracle_click_probs(src, cs.optics(), cs.detectors(), &FockTruncation::for_source(src))
            .unwrap()
    })
}

#[test]
fn dark_subtraction_recovers_dark_free_twin() {
    let n = 10_000_000;
    let noisy = run_protocol(&RunPlan::new(cfg(0.05, 0.9, 0.52, 0.6, 1e-4), n, 1, 21));
    let clean = run_protocol(&RunPlan::new(cfg(0.05, 0.9, 0.52, 0.6, 0.0), n, 1, 22));
    let a = estimator::dark_correct(&noisy).mean.signal.c;
    let b = estimator::dark_correct(&clean).mean.signal.c;
    let p = analytic::click_probs(&cfg(0.05, 0.9, 0.52, 0.6, 0.0)).unwrap().p_cc;
    let sigma = (2.0 * p / n as f64).sqrt();
    assert!((a - b).abs() <= 4.0 * sigma, "{a} vs {b}");
}

#[test]
fn decoy_singles_sum_to_kappa_mu_at_low_intensity() {
    let (mu, kappa) = (1e-4, 0.6);
    let rates = analytic::corrected_rates(&oracle_protocol(&cfg(mu, 1.0, 0.52, kappa, 0.0)));
    let (s1, s2) = estimator::singles_normalization(&rates, SinglesNormalization::DecoySum).unwrap();
    for s in [s1, s2] {
        assert!((s / (kappa * mu) - 1.0).abs() < 1e-3, "{s}");
    }
}

#[test]
fn singles_product_matches_kappa_mu_squared() {
    let rates = analytic::corrected_rates(&oracle_protocol(&cfg(0.005, 1.0, 0.52, 0.63, 0.0)));
    let (s1, s2) = estimator::singles_normalization(&rates, SinglesNormalization::DecoySum).unwrap();
    let target = 3.15e-3f64.powi(2);
    assert!((s1 * s2 / target - 1.0).abs() < 0.01);
}

#[test]
fn saturation_sign_of_normalization_gap_is_reported() {
    let rows = estimator::bound_vs_truth_report(
        &[cfg(0.5, 1.0, 0.5, 1.0, 0.0), cfg(0.005, 1.0, 0.5, 1.0, 0.0)],
        SinglesNormalization::DecoySum,
    )
    .unwrap();
    // Threshold detectors under-count, so the singles product falls short.
    assert!(rows[0].normalization_gap < 0.0);
    assert!(rows[1].normalization_gap < 0.0);
    assert!(rows[0].normalization_gap.abs() > rows[1].normalization_gap.abs());
}

#[test]
fn calibrated_bound_below_count_bound_when_singles_undershoot() {
    for (mu, delta, r, kappa) in [(0.05, 0.0, 0.5, 0.6), (0.2, 0.985, 0.52, 1.0), (0.01, 0.5, 0.54, 0.3)] {
        let c = cfg(mu, delta, r, kappa, 0.0);
        let set = run_protocol(&RunPlan::new(c, 20_000_000, 2, 40));
        let p = estimator::dark_correct(&set);
        let b = estimator::upper_bound(&p, SinglesNormalization::DecoySum).unwrap();
        let cal = estimator::calibrated_bound(&p, kappa, kappa, mu).unwrap();
        let (s1, s2) = estimator::singles_pair(&p.mean, SinglesNormalization::DecoySum);
        let count_bound = estimator::bound_numerator(&p.mean) / (s1 * s2);
        assert!(s1 * s2 <= kappa * kappa * mu * mu);
        if estimator::bound_numerator(&p.mean) > 0.0 {
            assert!(cal <= count_bound, "{cal} > {count_bound}");
        }
        assert!(b.p_ub.is_finite());
    }
}

#[test]
fn calibrated_bound_limits() {
    let n = 50_000_000;
    let perfect = run_protocol(&RunPlan::new(cfg(0.01, 1.0, 0.5, 1.0, 0.0), n, 2, 50));
    let cal = estimator::calibrated_bound(&estimator::dark_correct(&perfect), 1.0, 1.0, 0.01).unwrap();
    assert!(cal.abs() < 0.03, "{cal}");
    let distinct = run_protocol(&RunPlan::new(cfg(0.01, 0.0, 0.5, 1.0, 0.0), n, 2, 51));
    let cal = estimator::calibrated_bound(&estimator::dark_correct(&distinct), 1.0, 1.0, 0.01).unwrap();
    assert!((cal - 0.5).abs() < 0.03, "{cal}");
}

#[test]
fn ideal_interference_gives_unit_visibility() {
    let set = run_protocol(&RunPlan::new(cfg(0.01, 1.0, 0.5, 1.0, 0.0), 50_000_000, 4, 60));
    let b = estimator::upper_bound(&estimator::dark_correct(&set), SinglesNormalization::DecoySum)
        .unwrap();
    assert!(b.p_ub.abs() < 0.03 && (b.v - 1.0).abs() < 0.03);
    assert_eq!(b.v, 1.0 - b.p_ub);
}

/// With perfect overlap the dropped multi-photon remainder is negative, so the
/// count bound lands below the single-photon truth. The oracle agrees.
#[test]
fn bound_undershoots_truth_with_perfect_overlap() {
    let c = cfg(0.01, 1.0, 0.52, 0.6, 0.0);
    let rows = estimator::bound_vs_truth_report(&[c], SinglesNormalization::DecoySum).unwrap();
    assert!((rows[0].true_p11 - 0.0016).abs() < 1e-15);
    let rates = analytic::corrected_rates(&oracle_protocol(&c));
    let (s1, s2) = estimator::singles_pair(&rates, SinglesNormalization::DecoySum);
    let oracle_bound = estimator::bound_numerator(&rates) / (s1 * s2);
    // The numerator cancels to ~4e-9, so 1e-12 errors in the probabilities
    // show up at the 1e-7 level here.
    assert!((rows[0].p_ub - oracle_bound).abs() < 1e-6, "{} vs {oracle_bound}", rows[0].p_ub);
    assert!(rows[0].margin < 0.0 && rows[0].violation, "{:?}", rows[0]);
}
