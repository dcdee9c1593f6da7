//! File formats: run configuration (TOML key/value), counts CSV, scan index
//! and result tables.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{
    validate_config, Config, CountRecord, DetectorSpec, ExperimentSet, OpticsSpec, ProtocolSetting,
    ScanVariable, SourceSpec,
};
use crate::error::{ConfigError, DataError, RangeViolation};
use crate::estimator::{BoundResult, SinglesNormalization};
use crate::fitter::{DataPoint, FitResult};

pub const COUNTS_HEADER: [&str; 6] = [
    "setting",
    "trial",
    "n_pulses",
    "singles_d1",
    "singles_d2",
    "coincidences",
];

/// Keys accepted in a run configuration file. `mu` sets both arms; `mu_a` or
/// `mu_b` override it per arm. `kappa`/`dark` likewise set both detectors.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub mu: Option<f64>,
    pub mu_a: Option<f64>,
    pub mu_b: Option<f64>,
    pub r_coeff: Option<f64>,
    pub kappa: Option<f64>,
    pub kappa1: Option<f64>,
    pub kappa2: Option<f64>,
    pub dark: Option<f64>,
    pub dark1: Option<f64>,
    pub dark2: Option<f64>,
    pub delta: Option<f64>,
    pub tau: Option<f64>,
    pub sigma: Option<f64>,
    pub n_pulses: Option<u64>,
    pub n_trials: Option<usize>,
    pub seed: Option<u64>,
    pub s_normalization: Option<SinglesNormalization>,
}

/// Defaults follow the zero-delay setup: `kappa * mu = 3.15e-3`, `R = 0.52`.
pub mod defaults {
    pub const MU: f64 = 0.005;
    pub const R_COEFF: f64 = 0.52;
    pub const KAPPA: f64 = 0.63;
    pub const DARK: f64 = 1e-5;
    pub const DELTA: f64 = 1.0;
    pub const SIGMA: f64 = 1.0;
    pub const N_PULSES: u64 = 100_000_000;
    pub const N_TRIALS: usize = 4;
    pub const SEED: u64 = 20_190_417;
}

/// A fully resolved run configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RunSettings {
    pub config: Config,
    pub n_pulses: u64,
    pub n_trials: usize,
    pub seed: u64,
    pub s_normalization: SinglesNormalization,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigFileError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Invalid(#[from] ConfigError),
}

impl RunConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigFileError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigFileError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn resolve(&self) -> Result<RunSettings, ConfigError> {
        use defaults as d;
        let mu = self.mu.unwrap_or(d::MU);
        let kappa = self.kappa.unwrap_or(d::KAPPA);
        let dark = self.dark.unwrap_or(d::DARK);
        let source = SourceSpec {
            mu_a: self.mu_a.unwrap_or(mu),
            mu_b: self.mu_b.unwrap_or(mu),
            delta: self.delta.unwrap_or(d::DELTA),
            tau: self.tau.unwrap_or(0.0),
            sigma: self.sigma.unwrap_or(d::SIGMA),
        };
        let detectors = DetectorSpec {
            kappa1: self.kappa1.unwrap_or(kappa),
            kappa2: self.kappa2.unwrap_or(kappa),
            dark1: self.dark1.unwrap_or(dark),
            dark2: self.dark2.unwrap_or(dark),
        };
        let optics = OpticsSpec::new(self.r_coeff.unwrap_or(d::R_COEFF));
        let validated = validate_config(source, optics, detectors);
        let n_pulses = self.n_pulses.unwrap_or(d::N_PULSES);
        let n_trials = self.n_trials.unwrap_or(d::N_TRIALS);
        let mut extra = Vec::new();
        if n_pulses == 0 {
            extra.push(RangeViolation::new("n_pulses", 0.0, "[1, inf)"));
        }
        if !(1..=16384).contains(&n_trials) {
            extra.push(RangeViolation::new("n_trials", n_trials as f64, "[1, 16384]"));
        }
        match (validated, extra.is_empty()) {
            (Ok(config), true) => Ok(RunSettings {
                config,
                n_pulses,
                n_trials,
                seed: self.seed.unwrap_or(d::SEED),
                s_normalization: self.s_normalization.unwrap_or_default(),
            }),
            (Ok(_), false) => Err(ConfigError { violations: extra }),
            (Err(mut e), _) => {
                e.violations.extend(extra);
                Err(e)
            }
        }
    }
}

/// Parses `start:stop:n` into `n` evenly spaced values (inclusive ends).
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [start, stop, n] = parts[..] else {
        return Err(format!("grid `{spec}` is not start:stop:n"));
    };
    let start: f64 = start.trim().parse().map_err(|e| format!("grid start: {e}"))?;
    let stop: f64 = stop.trim().parse().map_err(|e| format!("grid stop: {e}"))?;
    let n: usize = n.trim().parse().map_err(|e| format!("grid count: {e}"))?;
    Ok(linspace(start, stop, n))
}

pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let last = (n - 1) as f64;
            (0..n)
                .map(|i| (start * (last - i as f64) + stop * i as f64) / last)
                .collect()
        }
    }
}

pub fn write_counts<W: Write>(out: W, set: &ExperimentSet) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(out);
    for r in set.records() {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_counts<R: Read>(input: R) -> Result<ExperimentSet, DataError> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != COUNTS_HEADER {
        return Err(DataError::Malformed(format!(
            "expected header `{}`, found `{}`",
            COUNTS_HEADER.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let records = r
        .deserialize::<CountRecord>()
        .collect::<Result<Vec<_>, _>>()?;
    ExperimentSet::new(records)
}

/// Row of the scan index written next to per-point counts files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanIndexRow {
    pub index: usize,
    pub variable: ScanVariable,
    pub value: f64,
    pub counts_file: String,
}

pub const SCAN_INDEX_HEADER: &str = "index,variable,value,counts_file";

/// One estimated grid point, the input format of `fit`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanResultRow {
    pub value: f64,
    pub g2: f64,
    pub g2_sd: f64,
    pub g2_sem: f64,
    pub p_ub: f64,
    pub p_ub_sd: f64,
    pub p_ub_sem: f64,
    pub v: f64,
    pub err_low: f64,
    pub err_high: f64,
    pub numerator: f64,
    pub denominator: f64,
    pub clamped: bool,
    pub negative_numerator: bool,
    pub n_trials: usize,
}

impl ScanResultRow {
    pub fn new(value: f64, b: &BoundResult) -> Self {
        let root_n = (b.n_trials as f64).sqrt();
        Self {
            value,
            g2: b.g2,
            g2_sd: b.sigma_g2,
            g2_sem: b.sigma_g2 / root_n,
            p_ub: b.p_ub,
            p_ub_sd: b.sigma_p_ub,
            p_ub_sem: b.sigma_p_ub / root_n,
            v: b.v,
            err_low: b.err_low,
            err_high: b.err_high,
            numerator: b.numerator,
            denominator: b.denominator,
            clamped: b.clamped,
            negative_numerator: b.negative_numerator,
            n_trials: b.n_trials,
        }
    }
}

/// Model prediction row of `predict`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictRow {
    pub value: f64,
    pub g2: f64,
    pub p_ub_predicted: f64,
    pub true_p11: f64,
}

/// Flat CSV form of a fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub baseline: f64,
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
    pub minimum: f64,
    pub ci_amplitude: f64,
    pub ci_center: f64,
    pub ci_width: f64,
    pub ci_minimum: f64,
    pub ci_minimum_low: f64,
    pub rss: f64,
    pub reduced_chi_square: f64,
    pub n_points: usize,
    pub weighted: bool,
}

impl From<&FitResult> for FitRow {
    fn from(f: &FitResult) -> Self {
        Self {
            baseline: f.model.baseline,
            amplitude: f.model.amplitude,
            center: f.model.center,
            width: f.model.width,
            minimum: f.minimum,
            ci_amplitude: f.ci_amplitude,
            ci_center: f.ci_center,
            ci_width: f.ci_width,
            ci_minimum: f.ci_minimum,
            ci_minimum_low: f.ci_minimum_low,
            rss: f.rss,
            reduced_chi_square: f.reduced_chi_square,
            n_points: f.n_points,
            weighted: f.weighted,
        }
    }
}

pub fn write_rows<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(input: R) -> Result<Vec<T>, DataError> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<Result<Vec<T>, _>>()?)
}

/// Reads fit input from any CSV with an `x` column, a `y` column and an
/// optional uncertainty column. Returns the points and whether every point
/// carried an uncertainty.
pub fn read_fit_points<R: Read>(
    input: R,
    x_col: &str,
    y_col: &str,
    err_col: Option<&str>,
) -> Result<(Vec<DataPoint>, bool), DataError> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let xi = find(x_col).ok_or_else(|| DataError::Malformed(format!("missing column `{x_col}`")))?;
    let yi = find(y_col).ok_or_else(|| DataError::Malformed(format!("missing column `{y_col}`")))?;
    let ei = err_col.and_then(find);
    let parse = |rec: &csv::StringRecord, i: usize, name: &str| -> Result<f64, DataError> {
        rec.get(i)
            .unwrap_or("")
            .trim()
            .parse::<f64>()
            .map_err(|e| DataError::Malformed(format!("column `{name}`: {e}")))
    };
    let mut points = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let sigma = match ei {
            Some(i) => Some(parse(&rec, i, err_col.unwrap_or_default())?),
            None => None,
        };
        points.push(DataPoint::new(
            parse(&rec, xi, x_col)?,
            parse(&rec, yi, y_col)?,
            sigma,
        ));
    }
    Ok((points, ei.is_some()))
}

/// Settings label used in counts files.
pub fn setting_label(s: ProtocolSetting) -> &'static str {
    s.as_str()
}
