//! The count-statistics-only bound on `P(1,1|1,1)`.
//!
//! From the signal run and the two blocked-port runs:
//!
//! ```text
//! P_ub = (c_signal - c_decoy_a - c_decoy_b) / (S_D1 * S_D2),    V = 1 - P_ub
//! ```
//!
//! with every rate corrected by the matching dark-run rate first.

use serde::{Deserialize, Serialize};

use crate::analytic;
use crate::config::{Config, ExperimentSet, ProtocolSetting};
use crate::error::{EstimateError, ModelError};
use crate::fock;

/// Coincidence probability expected for classical particles.
pub const CLASSICAL_P11: f64 = 0.5;

/// Which singles build the `S_D1 * S_D2` normalization.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SinglesNormalization {
    /// `S_Dj` = singles of detector `j` summed over the two blocked-port runs.
    #[default]
    DecoySum,
    /// `S_Dj` = singles of detector `j` in the signal run.
    SignalRun,
}

impl SinglesNormalization {
    pub fn as_str(&self) -> &'static str {
        match self {
            SinglesNormalization::DecoySum => "decoy_sum",
            SinglesNormalization::SignalRun => "signal_run",
        }
    }
}

impl std::str::FromStr for SinglesNormalization {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "decoy_sum" => Ok(SinglesNormalization::DecoySum),
            "signal_run" => Ok(SinglesNormalization::SignalRun),
            other => Err(format!(
                "unknown singles normalization `{other}` (expected decoy_sum or signal_run)"
            )),
        }
    }
}

/// Dark-corrected per-pulse probabilities of one setting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct SettingRates {
    pub c: f64,
    pub s1: f64,
    pub s2: f64,
}

/// Dark-corrected rates of the three light-carrying settings.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct TrialRates {
    pub signal: SettingRates,
    pub decoy_a: SettingRates,
    pub decoy_b: SettingRates,
}

impl TrialRates {
    fn fields(&self) -> [f64; 9] {
        let f = |s: &SettingRates| [s.c, s.s1, s.s2];
        let [a, b, c] = [f(&self.signal), f(&self.decoy_a), f(&self.decoy_b)];
        [a[0], a[1], a[2], b[0], b[1], b[2], c[0], c[1], c[2]]
    }

    fn from_fields(v: [f64; 9]) -> Self {
        let s = |i: usize| SettingRates {
            c: v[i],
            s1: v[i + 1],
            s2: v[i + 2],
        };
        Self {
            signal: s(0),
            decoy_a: s(3),
            decoy_b: s(6),
        }
    }
}

/// Corrected rates per trial, with their across-trial mean and standard deviation.
///
/// Subtraction noise can leave small negative values; they are kept as-is.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrectedProbs {
    pub trials: Vec<TrialRates>,
    pub mean: TrialRates,
    pub std: TrialRates,
}

/// Subtracts the dark-run rates from every other setting, trial by trial.
pub fn dark_correct(set: &ExperimentSet) -> CorrectedProbs {
    let trials: Vec<TrialRates> = (0..set.n_trials())
        .map(|trial| {
            let rates = |setting| {
                let r = set
                    .record(setting, trial)
                    .expect("ExperimentSet guarantees complete trials");
                let n = r.n_pulses as f64;
                (
                    r.coincidences as f64 / n,
                    r.singles_d1 as f64 / n,
                    r.singles_d2 as f64 / n,
                )
            };
            let (dc, d1, d2) = rates(ProtocolSetting::Dark);
            let sub = |setting| {
                let (c, s1, s2) = rates(setting);
                SettingRates {
                    c: c - dc,
                    s1: s1 - d1,
                    s2: s2 - d2,
                }
            };
            TrialRates {
                signal: sub(ProtocolSetting::Signal),
                decoy_a: sub(ProtocolSetting::DecoyA),
                decoy_b: sub(ProtocolSetting::DecoyB),
            }
        })
        .collect();

    let columns: Vec<[f64; 9]> = trials.iter().map(TrialRates::fields).collect();
    let mut mean = [0.0; 9];
    let mut std = [0.0; 9];
    for i in 0..9 {
        let (m, s) = mean_std(columns.iter().map(|c| c[i]));
        mean[i] = m;
        std[i] = s;
    }
    CorrectedProbs {
        trials,
        mean: TrialRates::from_fields(mean),
        std: TrialRates::from_fields(std),
    }
}

/// Sample mean and standard deviation (n - 1 denominator; zero for one sample).
pub fn mean_std(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.into_iter().collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn bound_numerator(rates: &TrialRates) -> f64 {
    rates.signal.c - rates.decoy_a.c - rates.decoy_b.c
}

/// `(S_D1, S_D2)` without the positivity check.
pub fn singles_pair(rates: &TrialRates, normalization: SinglesNormalization) -> (f64, f64) {
    match normalization {
        SinglesNormalization::DecoySum => (
            rates.decoy_a.s1 + rates.decoy_b.s1,
            rates.decoy_a.s2 + rates.decoy_b.s2,
        ),
        SinglesNormalization::SignalRun => (rates.signal.s1, rates.signal.s2),
    }
}

/// `(S_D1, S_D2)` whose product stands in for `kappa1 kappa2 mu^2`.
pub fn singles_normalization(
    rates: &TrialRates,
    normalization: SinglesNormalization,
) -> Result<(f64, f64), EstimateError> {
    let (s1, s2) = singles_pair(rates, normalization);
    let product = s1 * s2;
    if product.is_nan() || product <= 0.0 || s1 < 0.0 {
        return Err(EstimateError::NonPositiveNormalization { product });
    }
    Ok((s1, s2))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundResult {
    /// Mean across trials of the per-trial bound.
    pub p_ub: f64,
    /// Visibility `1 - p_ub / (2 P_classical)`.
    pub v: f64,
    pub sigma_p_ub: f64,
    pub sigma_v: f64,
    /// Reported lower error on `p_ub`, truncated so that `p_ub - err_low >= 0`.
    pub err_low: f64,
    pub err_high: f64,
    /// True when `err_low` was truncated.
    pub clamped: bool,
    pub negative_numerator: bool,
    /// Mean corrected numerator and normalization.
    pub numerator: f64,
    pub denominator: f64,
    pub per_trial: Vec<f64>,
    /// `c_signal / (s1_signal s2_signal)`, averaged over trials.
    pub g2: f64,
    pub sigma_g2: f64,
    pub n_trials: usize,
    pub normalization: SinglesNormalization,
}

pub fn visibility(p_ub: f64) -> f64 {
    1.0 - p_ub / (2.0 * CLASSICAL_P11)
}

/// Bound, visibility and across-trial spread.
pub fn upper_bound(
    p: &CorrectedProbs,
    normalization: SinglesNormalization,
) -> Result<BoundResult, EstimateError> {
    let mut per_trial = Vec::with_capacity(p.trials.len());
    let mut nums = Vec::with_capacity(p.trials.len());
    let mut dens = Vec::with_capacity(p.trials.len());
    let mut g2s = Vec::with_capacity(p.trials.len());
    for t in &p.trials {
        let (s1, s2) = singles_normalization(t, normalization)?;
        let num = bound_numerator(t);
        per_trial.push(num / (s1 * s2));
        nums.push(num);
        dens.push(s1 * s2);
        let singles = t.signal.s1 * t.signal.s2;
        g2s.push(if singles > 0.0 {
            t.signal.c / singles
        } else {
            f64::NAN
        });
    }
    let (p_ub, sigma) = mean_std(per_trial.iter().copied());
    let (g2, sigma_g2) = mean_std(g2s);
    let numerator = mean_std(nums).0;
    let err_low = sigma.min(p_ub.max(0.0));
    Ok(BoundResult {
        p_ub,
        v: visibility(p_ub),
        sigma_p_ub: sigma,
        sigma_v: sigma / (2.0 * CLASSICAL_P11),
        err_low,
        err_high: sigma,
        clamped: err_low < sigma,
        negative_numerator: numerator < 0.0,
        numerator,
        denominator: mean_std(dens).0,
        per_trial,
        g2,
        sigma_g2,
        n_trials: p.trials.len(),
        normalization,
    })
}

/// Bound with externally calibrated efficiencies and mean photon number,
/// evaluated on the across-trial mean rates.
pub fn calibrated_bound(
    p: &CorrectedProbs,
    kappa1: f64,
    kappa2: f64,
    mu: f64,
) -> Result<f64, EstimateError> {
    let denom = kappa1 * kappa2 * mu * mu;
    if denom == 0.0 {
        return Err(EstimateError::ZeroDenominator);
    }
    Ok(bound_numerator(&p.mean) / denom)
}

/// One row of the bound-versus-ground-truth comparison.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundCheckRow {
    pub mu: f64,
    pub delta_eff: f64,
    pub r_coeff: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub dark: f64,
    pub p_ub: f64,
    pub true_p11: f64,
    pub margin: f64,
    /// `S_D1 S_D2 - kappa1 kappa2 mu^2`; its sign tells whether the singles
    /// product really under-estimates the calibrated denominator.
    pub normalization_gap: f64,
    /// Only meaningful for dark-free rows.
    pub violation: bool,
}

/// Model bound against the single-photon ground truth over a grid of configs.
///
/// Rows with `dark > 0` are reported but never flagged.
pub fn bound_vs_truth_report(
    configs: &[Config],
    normalization: SinglesNormalization,
) -> Result<Vec<BoundCheckRow>, ModelError> {
    configs
        .iter()
        .map(|c| {
            let s = c.source();
            let d = c.detectors();
            let pred = analytic::predicted_bound(c, normalization)?;
            let truth = fock::true_p11(c.optics());
            let margin = pred.value - truth;
            let dark_free = d.dark1 == 0.0 && d.dark2 == 0.0;
            Ok(BoundCheckRow {
                mu: s.mu_a.max(s.mu_b),
                delta_eff: s.effective_overlap(),
                r_coeff: c.optics().r(),
                kappa1: d.kappa1,
                kappa2: d.kappa2,
                dark: d.dark1.max(d.dark2),
                p_ub: pred.value,
                true_p11: truth,
                margin,
                normalization_gap: pred.denominator - d.kappa1 * d.kappa2 * s.mu_a * s.mu_b,
                violation: dark_free && margin < -1e-9,
            })
        })
        .collect()
}
