//! Simulated counts against exact probabilities.

use hom_core::analytic::{self, ClickProbabilities};
use hom_core::estimator::{self, SinglesNormalization};
use hom_core::fock::{self, FockTruncation};
use hom_core::montecarlo::{run_protocol, scan, simulate_setting, RunPlan};
use hom_core::{Config, DetectorSpec, OpticsSpec, ProtocolSetting, ScanVariable, SourceSpec};

fn cfg(mu: f64, delta: f64, r: f64, kappa: f64, dark: f64) -> Config {
    Config::new(
        SourceSpec::symmetric(mu, delta),
        OpticsSpec::new(r),
        DetectorSpec::symmetric(kappa, dark),
    )
    .unwrap()
}

fn oracle(c: &Config) -> ClickProbabilities {
    let s = c.source();
    fock::oracle_click_probs(s, c.optics(), c.detectors(), &FockTruncation::for_source(s)).unwrap()
}

/// Distance of a count from its binomial mean, in standard deviations.
fn z(count: u64, n: u64, p: f64) -> f64 {
    let n = n as f64;
    (count as f64 - n * p) / (n * p * (1.0 - p)).sqrt()
}

#[test]
fn every_rate_within_four_sigma_across_seeds() {
    let c = cfg(0.05, 0.9, 0.52, 0.6, 1e-3);
    let probs = ProtocolSetting::ALL.map(|s| oracle(&c.for_setting(s)));
    let n = 10_000_000;
    let seeds = 50;
    // [setting][s1, s2, cc] -> seeds inside 4 sigma
    let mut inside = [[0u32; 3]; 4];
    for seed in 0..seeds {
        let set = run_protocol(&RunPlan::new(c, n, 1, 1000 + seed));
        for s in ProtocolSetting::ALL {
            let r = set.record(s, 0).unwrap();
            let p = &probs[s.index()];
            let zs = [
                z(r.singles_d1, n, p.p_s1),
                z(r.singles_d2, n, p.p_s2),
                z(r.coincidences, n, p.p_cc),
            ];
            for (k, zk) in zs.iter().enumerate() {
                inside[s.index()][k] += (zk.abs() <= 4.0) as u32;
            }
        }
    }
    for s in ProtocolSetting::ALL {
        for (k, hits) in inside[s.index()].iter().enumerate() {
            let frac = *hits as f64 / seeds as f64;
            assert!(frac >= 0.99, "{s}, rate {k}: {frac}");
        }
    }
}

#[test]
fn decoy_a_singles_follow_transmitted_arm() {
    let c = cfg(0.005, 1.0, 0.52, 0.63, 0.0);
    let n = 10_000_000;
    let r = simulate_setting(&RunPlan::new(c, n, 1, 7), ProtocolSetting::DecoyA, 0);
    let p = oracle(&c.for_setting(ProtocolSetting::DecoyA)).p_s1;
    // Only arm a is lit, so detector 1 sees the transmitted part.
    assert!((p - (1.0 - (-0.63f64 * 0.48 * 0.005).exp())).abs() < 1e-12);
    assert!(z(r.singles_d1, n, p).abs() <= 3.0);
}

#[test]
fn ideal_signal_coincidences_match_model() {
    let c = cfg(0.005, 1.0, 0.5, 0.63, 0.0);
    let n = 10_000_000;
    let r = simulate_setting(&RunPlan::new(c, n, 1, 8), ProtocolSetting::Signal, 0);
    let p = analytic::click_probs(&c).unwrap().p_cc;
    assert!(z(r.coincidences, n, p).abs() <= 3.0);
}

#[test]
fn dark_only_coincidences_are_product_of_dark_rates() {
    let c = cfg(0.0, 1.0, 0.5, 0.63, 1e-4);
    let n = 10_000_000;
    let r = simulate_setting(&RunPlan::new(c, n, 1, 9), ProtocolSetting::Signal, 0);
    assert!(z(r.coincidences, n, 1e-8).abs() <= 3.0);
    assert!(z(r.singles_d1, n, 1e-4).abs() <= 3.0);
}

#[test]
fn counts_do_not_depend_on_thread_count() {
    let plan = RunPlan::new(cfg(0.05, 0.97, 0.52, 0.63, 1e-5), 40_000_000, 2, 5);
    let run_on = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_protocol(&plan))
    };
    assert_eq!(run_on(1), run_on(3));
}

#[test]
fn bound_spread_scales_inverse_root_n() {
    let c = cfg(0.2, 0.95, 0.5, 1.0, 0.0);
    let trials = 300;
    let sd = |n| {
        let set = run_protocol(&RunPlan::new(c, n, trials, 31));
        let b = estimator::upper_bound(&estimator::dark_correct(&set), SinglesNormalization::DecoySum)
            .unwrap();
        b.sigma_p_ub
    };
    let ratio = sd(50_000) / sd(200_000);
    assert!((ratio / 2.0 - 1.0).abs() <= 0.2, "ratio {ratio}");
}

#[test]
fn large_delay_scan_points_approach_one_half() {
    let plan = RunPlan::new(cfg(0.05, 1.0, 0.5, 0.6, 0.0), 20_000_000, 4, 3);
    let out = scan(&plan, ScanVariable::Tau, &[-12.0, 12.0]).unwrap();
    assert_eq!(out.len(), 2);
    for (_, set) in &out {
        let b = estimator::upper_bound(&estimator::dark_correct(set), SinglesNormalization::DecoySum)
            .unwrap();
        assert!((b.p_ub - 0.5).abs() < 0.03, "{}", b.p_ub);
    }
}

#[test]
fn g2_estimates_rise_with_mean_photon_number() {
    let plan = RunPlan::new(cfg(0.05, 0.985, 0.52, 0.63, 0.0), 2_000_000, 4, 4);
    let out = scan(&plan, ScanVariable::Mu, &[0.05, 0.4, 1.2]).unwrap();
    let g2: Vec<f64> = out
        .iter()
        .map(|(_, set)| {
            estimator::upper_bound(&estimator::dark_correct(set), SinglesNormalization::DecoySum)
                .unwrap()
                .g2
        })
        .collect();
    assert!(g2[0] < g2[1] && g2[1] < g2[2], "{g2:?}");
}

#[test]
fn twenty_one_point_scan_has_twenty_one_runs() {
    let grid: Vec<f64> = (0..21).map(|i| -2.0 + 0.2 * i as f64).collect();
    let plan = RunPlan::new(cfg(0.05, 1.0, 0.5, 0.6, 0.0), 1000, 1, 1);
    assert_eq!(scan(&plan, ScanVariable::Tau, &grid).unwrap().len(), 21);
}
