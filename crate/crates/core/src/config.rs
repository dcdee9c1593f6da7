//! Domain types shared by every model: the two input pulses, the beamsplitter,
//! the detectors, the four protocol settings and the raw count records.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, DataError, RangeViolation};

/// The two phase-randomized weak coherent pulses entering ports `a` and `b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    /// Mean photon number in port `a`.
    pub mu_a: f64,
    /// Mean photon number in port `b`.
    pub mu_b: f64,
    /// Mode-overlap amplitude at zero delay (1 = indistinguishable).
    pub delta: f64,
    /// Relative delay between the pulses.
    pub tau: f64,
    /// Width of the Gaussian overlap model, same units as `tau`.
    pub sigma: f64,
}

impl SourceSpec {
    pub fn symmetric(mu: f64, delta: f64) -> Self {
        Self {
            mu_a: mu,
            mu_b: mu,
            delta,
            tau: 0.0,
            sigma: 1.0,
        }
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    /// Overlap amplitude at the configured delay: `delta * exp(-tau^2 / (2 sigma^2))`.
    pub fn effective_overlap(&self) -> f64 {
        self.delta * (-self.tau * self.tau / (2.0 * self.sigma * self.sigma)).exp()
    }

    fn check(&self, out: &mut Vec<RangeViolation>) {
        range(out, "mu_a", self.mu_a, 0.0..=f64::MAX, "[0, inf)");
        range(out, "mu_b", self.mu_b, 0.0..=f64::MAX, "[0, inf)");
        range(out, "delta", self.delta, 0.0..=1.0, "[0, 1]");
        if !self.tau.is_finite() {
            out.push(RangeViolation::new("tau", self.tau, "finite"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            out.push(RangeViolation::new("sigma", self.sigma, "(0, inf)"));
        }
    }
}

/// Lossless beamsplitter; `T = 1 - R`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpticsSpec {
    pub r_coeff: f64,
}

impl OpticsSpec {
    pub fn new(r_coeff: f64) -> Self {
        Self { r_coeff }
    }

    pub fn r(&self) -> f64 {
        self.r_coeff
    }

    pub fn t(&self) -> f64 {
        1.0 - self.r_coeff
    }

    fn check(&self, out: &mut Vec<RangeViolation>) {
        if !(self.r_coeff > 0.0 && self.r_coeff < 1.0) {
            out.push(RangeViolation::new("r_coeff", self.r_coeff, "(0, 1)"));
        }
    }
}

/// Threshold detectors behind output ports `c` (detector 1) and `d` (detector 2).
///
/// Efficiencies include the optical loss between the beamsplitter and the
/// detector; dark counts are per-gate click probabilities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec {
    pub kappa1: f64,
    pub kappa2: f64,
    pub dark1: f64,
    pub dark2: f64,
}

impl DetectorSpec {
    pub fn symmetric(kappa: f64, dark: f64) -> Self {
        Self {
            kappa1: kappa,
            kappa2: kappa,
            dark1: dark,
            dark2: dark,
        }
    }

    fn check(&self, out: &mut Vec<RangeViolation>) {
        range(out, "kappa1", self.kappa1, 0.0..=1.0, "[0, 1]");
        range(out, "kappa2", self.kappa2, 0.0..=1.0, "[0, 1]");
        if !(self.dark1 >= 0.0 && self.dark1 < 1.0) {
            out.push(RangeViolation::new("dark1", self.dark1, "[0, 1)"));
        }
        if !(self.dark2 >= 0.0 && self.dark2 < 1.0) {
            out.push(RangeViolation::new("dark2", self.dark2, "[0, 1)"));
        }
    }
}

fn range(
    out: &mut Vec<RangeViolation>,
    field: &'static str,
    value: f64,
    allowed: std::ops::RangeInclusive<f64>,
    label: &'static str,
) {
    if !allowed.contains(&value) {
        out.push(RangeViolation::new(field, value, label));
    }
}

/// A validated source/optics/detector triple. Only constructible through
/// [`validate_config`], so every holder may assume the invariants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Config {
    source: SourceSpec,
    optics: OpticsSpec,
    detectors: DetectorSpec,
}

/// Checks every field and reports all violations at once.
pub fn validate_config(
    source: SourceSpec,
    optics: OpticsSpec,
    detectors: DetectorSpec,
) -> Result<Config, ConfigError> {
    let mut violations = Vec::new();
    source.check(&mut violations);
    optics.check(&mut violations);
    detectors.check(&mut violations);
    if violations.is_empty() {
        Ok(Config {
            source,
            optics,
            detectors,
        })
    } else {
        Err(ConfigError { violations })
    }
}

impl Config {
    pub fn new(
        source: SourceSpec,
        optics: OpticsSpec,
        detectors: DetectorSpec,
    ) -> Result<Self, ConfigError> {
        validate_config(source, optics, detectors)
    }

    pub fn source(&self) -> &SourceSpec {
        &self.source
    }

    pub fn optics(&self) -> &OpticsSpec {
        &self.optics
    }

    pub fn detectors(&self) -> &DetectorSpec {
        &self.detectors
    }

    /// The same config with one input arm (or both) blocked.
    ///
    /// Blocking only zeroes mean photon numbers, so the result is valid.
    pub fn for_setting(&self, setting: ProtocolSetting) -> Config {
        let mut source = self.source;
        match setting {
            ProtocolSetting::Signal => {}
            ProtocolSetting::DecoyA => source.mu_b = 0.0,
            ProtocolSetting::DecoyB => source.mu_a = 0.0,
            ProtocolSetting::Dark => {
                source.mu_a = 0.0;
                source.mu_b = 0.0;
            }
        }
        Config { source, ..*self }
    }

    /// Replaces the scanned variable. `Mu` sets both arms.
    pub fn with_variable(&self, variable: ScanVariable, value: f64) -> Result<Config, ConfigError> {
        let mut source = self.source;
        match variable {
            ScanVariable::Tau => source.tau = value,
            ScanVariable::Mu => {
                source.mu_a = value;
                source.mu_b = value;
            }
        }
        validate_config(source, self.optics, self.detectors)
    }
}

/// Quantity swept by a scan.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanVariable {
    Tau,
    Mu,
}

impl ScanVariable {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScanVariable::Tau => "tau",
            ScanVariable::Mu => "mu",
        }
    }
}

impl fmt::Display for ScanVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ScanVariable {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tau" => Ok(ScanVariable::Tau),
            "mu" => Ok(ScanVariable::Mu),
            other => Err(format!("unknown scan variable `{other}` (expected tau or mu)")),
        }
    }
}

/// The four measurements of the protocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolSetting {
    /// Both arms open.
    Signal,
    /// Port `b` blocked: `mu_a = mu`, `mu_b = 0`.
    DecoyA,
    /// Port `a` blocked: `mu_a = 0`, `mu_b = mu`.
    DecoyB,
    /// Both arms blocked.
    Dark,
}

impl ProtocolSetting {
    pub const ALL: [ProtocolSetting; 4] = [
        ProtocolSetting::Signal,
        ProtocolSetting::DecoyA,
        ProtocolSetting::DecoyB,
        ProtocolSetting::Dark,
    ];

    pub fn index(&self) -> usize {
        match self {
            ProtocolSetting::Signal => 0,
            ProtocolSetting::DecoyA => 1,
            ProtocolSetting::DecoyB => 2,
            ProtocolSetting::Dark => 3,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ProtocolSetting::Signal => "signal",
            ProtocolSetting::DecoyA => "decoy_a",
            ProtocolSetting::DecoyB => "decoy_b",
            ProtocolSetting::Dark => "dark",
        }
    }
}

impl fmt::Display for ProtocolSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ProtocolSetting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProtocolSetting::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown setting `{s}`"))
    }
}

/// Raw counts from one setting in one trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRecord {
    pub setting: ProtocolSetting,
    pub trial: usize,
    pub n_pulses: u64,
    pub singles_d1: u64,
    pub singles_d2: u64,
    pub coincidences: u64,
}

impl CountRecord {
    pub fn check(&self) -> Result<(), DataError> {
        let bad = |reason: &str| DataError::InvalidRecord {
            setting: self.setting,
            trial: self.trial,
            reason: reason.to_string(),
        };
        if self.n_pulses == 0 {
            return Err(bad("n_pulses must be positive"));
        }
        if self.singles_d1 > self.n_pulses || self.singles_d2 > self.n_pulses {
            return Err(bad("singles exceed n_pulses"));
        }
        if self.coincidences > self.singles_d1.min(self.singles_d2) {
            return Err(bad("coincidences exceed singles"));
        }
        Ok(())
    }
}

/// All four settings for every trial.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExperimentSet {
    records: Vec<CountRecord>,
    n_trials: usize,
}

impl ExperimentSet {
    /// Sorts the records by (trial, setting) and checks completeness.
    pub fn new(mut records: Vec<CountRecord>) -> Result<Self, DataError> {
        if records.is_empty() {
            return Err(DataError::Empty);
        }
        for r in &records {
            r.check()?;
        }
        records.sort_by_key(|r| (r.trial, r.setting));
        let n_trials = records.iter().map(|r| r.trial).max().unwrap_or(0) + 1;
        for trial in 0..n_trials {
            let rows: Vec<&CountRecord> = records.iter().filter(|r| r.trial == trial).collect();
            for setting in ProtocolSetting::ALL {
                match rows.iter().filter(|r| r.setting == setting).count() {
                    0 => return Err(DataError::MissingSetting { setting, trial }),
                    1 => {}
                    _ => return Err(DataError::DuplicateRecord { setting, trial }),
                }
            }
            let n = rows[0].n_pulses;
            if rows.iter().any(|r| r.n_pulses != n) {
                return Err(DataError::PulseMismatch { trial });
            }
        }
        Ok(Self { records, n_trials })
    }

    pub fn records(&self) -> &[CountRecord] {
        &self.records
    }

    pub fn n_trials(&self) -> usize {
        self.n_trials
    }

    pub fn record(&self, setting: ProtocolSetting, trial: usize) -> Option<&CountRecord> {
        // Records are sorted by (trial, setting) and complete.
        self.records.get(trial * 4 + setting.index())
    }
}
