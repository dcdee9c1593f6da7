//! Interval coverage and goodness of fit on synthetic dips.

use hom_core::fitter::{fit_dip, reduced_chi_square, DataPoint, DipModel};
use hom_core::montecarlo::block_rng;
use rand_distr::{Distribution, Normal};

const TRUE: DipModel = DipModel {
    baseline: 0.5,
    amplitude: 0.49,
    center: -0.2,
    width: 0.8,
};

fn noisy(seed: u64, sd: f64) -> Vec<DataPoint> {
    let mut rng = block_rng(seed, 0);
    let noise = Normal::new(0.0, sd).unwrap();
    (0..21)
        .map(|i| {
            let x = -3.0 + 0.3 * i as f64;
            DataPoint::new(x, TRUE.eval(x) + noise.sample(&mut rng), Some(sd))
        })
        .collect()
}

#[test]
fn minimum_interval_covers_truth() {
    let covered = (0..200)
        .filter(|&seed| {
            let f = fit_dip(&noisy(seed, 0.01), TRUE.baseline).unwrap();
            f.minimum_ci_contains(TRUE.minimum())
        })
        .count();
    assert!(covered >= 180, "{covered} of 200");
}

#[test]
fn reduced_chi_square_near_one_with_matched_noise() {
    let inside = (0..200)
        .filter(|&seed| {
            let pts = noisy(1000 + seed, 0.02);
            let f = fit_dip(&pts, TRUE.baseline).unwrap();
            (0.3..=3.0).contains(&reduced_chi_square(&pts, &f))
        })
        .count();
    assert!(inside >= 190, "{inside} of 200");
}

#[test]
fn unweighted_fit_of_noiseless_data() {
    let pts: Vec<DataPoint> = (0..21)
        .map(|i| {
            let x = -3.0 + 0.3 * i as f64;
            DataPoint::new(x, TRUE.eval(x), None)
        })
        .collect();
    let f = fit_dip(&pts, TRUE.baseline).unwrap();
    assert!(!f.weighted);
    assert!((f.model.amplitude - TRUE.amplitude).abs() < 1e-8);
    assert!((f.model.center - TRUE.center).abs() < 1e-8);
    assert!((f.model.width - TRUE.width).abs() < 1e-8);
}
