//! Phase-averaged click model for two phase-randomized coherent pulses.
//!
//! For a fixed relative phase the output ports carry coherent states, so each
//! threshold detector clicks independently with probability
//! `1 - (1 - dark) exp(-kappa I(phi))`. Averaging over the uniform phase gives
//! the exact singles and coincidence probabilities to all photon orders.

use std::f64::consts::TAU;

use serde::Serialize;

use crate::config::{Config, OpticsSpec, ProtocolSetting, ScanVariable};
use crate::error::ModelError;
use crate::estimator::{self, SettingRates, SinglesNormalization, TrialRates};

const START_NODES: usize = 64;
const MAX_NODES: usize = 1 << 20;
const QUADRATURE_TOL: f64 = 1e-12;

/// Per-pulse click probabilities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClickProbabilities {
    pub p_s1: f64,
    pub p_s2: f64,
    pub p_cc: f64,
}

/// Phase-conditioned intensities at the two detectors.
///
/// `I_c = T mu_a + R mu_b + A sin(phi)`, `I_d = R mu_a + T mu_b - A sin(phi)` with
/// `A = 2 sqrt(T R mu_a mu_b) delta_eff`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PulseModel {
    pub mean_c: f64,
    pub mean_d: f64,
    pub interference: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub dark1: f64,
    pub dark2: f64,
}

impl PulseModel {
    pub fn new(config: &Config) -> Self {
        let s = config.source();
        let (r, t) = (config.optics().r(), config.optics().t());
        let d = config.detectors();
        Self {
            mean_c: t * s.mu_a + r * s.mu_b,
            mean_d: r * s.mu_a + t * s.mu_b,
            interference: 2.0 * (t * r * s.mu_a * s.mu_b).sqrt() * s.effective_overlap(),
            kappa1: d.kappa1,
            kappa2: d.kappa2,
            dark1: d.dark1,
            dark2: d.dark2,
        }
    }

    /// Detector intensities given `sin(phi)`.
    #[inline]
    pub fn intensities(&self, sin_phi: f64) -> (f64, f64) {
        let x = self.interference * sin_phi;
        // Clamp rounding below zero at sin(phi) = +-1 with full visibility.
        ((self.mean_c + x).max(0.0), (self.mean_d - x).max(0.0))
    }

    #[inline]
    pub fn click_probs_at(&self, sin_phi: f64) -> (f64, f64) {
        let (ic, id) = self.intensities(sin_phi);
        (
            click_probability(self.kappa1, self.dark1, ic),
            click_probability(self.kappa2, self.dark2, id),
        )
    }

    pub fn is_phase_independent(&self) -> bool {
        self.interference == 0.0
    }
}

/// `1 - (1 - dark) exp(-kappa I)`, evaluated without cancellation.
#[inline]
pub fn click_probability(kappa: f64, dark: f64, intensity: f64) -> f64 {
    dark - (1.0 - dark) * (-kappa * intensity).exp_m1()
}

/// Exact phase-averaged click probabilities for the config as given.
pub fn click_probs(config: &Config) -> Result<ClickProbabilities, ModelError> {
    let model = PulseModel::new(config);
    if model.is_phase_independent() {
        let (q1, q2) = model.click_probs_at(0.0);
        return Ok(ClickProbabilities {
            p_s1: q1,
            p_s2: q2,
            p_cc: q1 * q2,
        });
    }

    // Periodic trapezoid rule; each refinement adds the odd nodes of the finer grid.
    let accumulate = |n: usize, offset: f64, step: usize| {
        let mut sums = [0.0f64; 3];
        let mut k = 0;
        while k < n {
            let phi = TAU * (k as f64 + offset) / n as f64;
            let (q1, q2) = model.click_probs_at(phi.sin());
            sums[0] += q1;
            sums[1] += q2;
            sums[2] += q1 * q2;
            k += step;
        }
        sums
    };

    let mut n = START_NODES;
    let mut sums = accumulate(n, 0.0, 1);
    let mut current = sums.map(|s| s / n as f64);
    loop {
        let odd = accumulate(n, 0.5, 1);
        for (s, o) in sums.iter_mut().zip(odd) {
            *s += o;
        }
        n *= 2;
        let refined = sums.map(|s| s / n as f64);
        let change = refined
            .iter()
            .zip(current)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        current = refined;
        if change <= QUADRATURE_TOL {
            break;
        }
        if n >= MAX_NODES {
            return Err(ModelError::QuadratureNotConverged {
                last_change: change,
                nodes: n,
            });
        }
    }
    Ok(ClickProbabilities {
        p_s1: current[0],
        p_s2: current[1],
        p_cc: current[2],
    })
}

/// `p_cc / (p_s1 p_s2)` for the config as given.
pub fn g2_zero(config: &Config) -> Result<f64, ModelError> {
    let p = click_probs(config)?;
    let denom = p.p_s1 * p.p_s2;
    if denom == 0.0 {
        return Err(ModelError::DivisionDegenerate);
    }
    Ok(p.p_cc / denom)
}

/// Model prediction of the count-statistics bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PredictedBound {
    pub value: f64,
    pub numerator: f64,
    pub denominator: f64,
    /// The dark-corrected numerator came out negative; `value` is unclamped.
    pub negative_numerator: bool,
}

/// Click probabilities for all four settings, in [`ProtocolSetting::ALL`] order.
pub fn protocol_probs(config: &Config) -> Result<[ClickProbabilities; 4], ModelError> {
    let mut out = [ClickProbabilities {
        p_s1: 0.0,
        p_s2: 0.0,
        p_cc: 0.0,
    }; 4];
    for setting in ProtocolSetting::ALL {
        out[setting.index()] = click_probs(&config.for_setting(setting))?;
    }
    Ok(out)
}

/// Dark-corrected rates built from model probabilities, exactly as the
/// estimator builds them from counts.
pub fn corrected_rates(probs: &[ClickProbabilities; 4]) -> TrialRates {
    let dark = &probs[ProtocolSetting::Dark.index()];
    let sub = |p: &ClickProbabilities| SettingRates {
        c: p.p_cc - dark.p_cc,
        s1: p.p_s1 - dark.p_s1,
        s2: p.p_s2 - dark.p_s2,
    };
    TrialRates {
        signal: sub(&probs[ProtocolSetting::Signal.index()]),
        decoy_a: sub(&probs[ProtocolSetting::DecoyA.index()]),
        decoy_b: sub(&probs[ProtocolSetting::DecoyB.index()]),
    }
}

/// The count-statistics bound evaluated on exact model probabilities.
///
/// A zero normalization yields a non-finite `value` rather than an error,
/// matching the estimator only for strictly positive singles.
pub fn predicted_bound(
    config: &Config,
    normalization: SinglesNormalization,
) -> Result<PredictedBound, ModelError> {
    let rates = corrected_rates(&protocol_probs(config)?);
    let numerator = estimator::bound_numerator(&rates);
    let (s1, s2) = estimator::singles_pair(&rates, normalization);
    let denominator = s1 * s2;
    Ok(PredictedBound {
        value: numerator / denominator,
        numerator,
        denominator,
        negative_numerator: numerator < 0.0,
    })
}

/// Quantum prediction for indistinguishable single photons: `(R - T)^2`.
pub fn quantum_p11(optics: &OpticsSpec) -> f64 {
    let d = optics.r() - optics.t();
    d * d
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScanRow {
    pub value: f64,
    pub g2: f64,
    pub p_ub: f64,
}

/// Model curve over a grid of delays or mean photon numbers.
pub fn scan_curve(
    config: &Config,
    variable: ScanVariable,
    grid: &[f64],
    normalization: SinglesNormalization,
) -> Result<Vec<ScanRow>, ModelError> {
    if grid.is_empty() {
        return Err(ModelError::Config(crate::error::ConfigError {
            violations: vec![crate::error::RangeViolation::new(
                "grid",
                f64::NAN,
                "non-empty",
            )],
        }));
    }
    grid.iter()
        .map(|&value| {
            let c = config.with_variable(variable, value)?;
            Ok(ScanRow {
                value,
                g2: g2_zero(&c)?,
                p_ub: predicted_bound(&c, normalization)?.value,
            })
        })
        .collect()
}
