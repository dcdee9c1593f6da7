use std::fmt;

use thiserror::Error;

use crate::config::ProtocolSetting;

#[derive(Clone, Debug, PartialEq)]
pub struct RangeViolation {
    pub field: &'static str,
    pub value: f64,
    pub allowed: &'static str,
}

impl RangeViolation {
    pub fn new(field: &'static str, value: f64, allowed: &'static str) -> Self {
        Self {
            field,
            value,
            allowed,
        }
    }
}

impl fmt::Display for RangeViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {} outside {}", self.field, self.value, self.allowed)
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub struct ConfigError {
    pub violations: Vec<RangeViolation>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration: ")?;
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("no records")]
    Empty,
    #[error("missing {setting} record for trial {trial}")]
    MissingSetting {
        setting: ProtocolSetting,
        trial: usize,
    },
    #[error("duplicate {setting} record for trial {trial}")]
    DuplicateRecord {
        setting: ProtocolSetting,
        trial: usize,
    },
    #[error("settings of trial {trial} have different n_pulses")]
    PulseMismatch { trial: usize },
    #[error("{setting} record for trial {trial}: {reason}")]
    InvalidRecord {
        setting: ProtocolSetting,
        trial: usize,
        reason: String,
    },
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ModelError {
    #[error("phase quadrature did not converge (last change {last_change:e} at {nodes} nodes)")]
    QuadratureNotConverged { last_change: f64, nodes: usize },
    #[error("singles product is zero; g2 undefined")]
    DivisionDegenerate,
    #[error("Fock truncation at n_max = {n_max} leaves tail mass {tail:e} (> 1e-12)")]
    TruncationInsufficient { n_max: usize, tail: f64 },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum EstimateError {
    #[error("singles normalization S_D1*S_D2 = {product:e} is not positive")]
    NonPositiveNormalization { product: f64 },
    #[error("calibration denominator kappa1*kappa2*mu^2 is zero")]
    ZeroDenominator,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum FitError {
    #[error("need at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("fit diverged: {0}")]
    FitDiverged(String),
}
