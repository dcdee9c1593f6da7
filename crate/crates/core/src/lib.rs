//! Hong-Ou-Mandel interference with phase-randomized weak coherent states.
//!
//! * [`config`]: pulses, beamsplitter, detectors, protocol settings, counts.
//! * [`analytic`]: exact phase-averaged click probabilities and model curves.
//! * [`fock`]: truncated Fock-space oracle and single-photon ground truth.
//! * [`montecarlo`]: seeded pulse-level simulation of the four settings.
//! * [`estimator`]: dark correction, count-statistics bound, visibility.
//! * [`fitter`]: inverted-Gaussian dip fits with confidence intervals.
//! * [`io`]: configuration and table formats.

pub mod analytic;
pub mod config;
pub mod error;
pub mod estimator;
pub mod fitter;
pub mod fock;
pub mod io;
pub mod montecarlo;

pub use config::{
    validate_config, Config, CountRecord, DetectorSpec, ExperimentSet, OpticsSpec, ProtocolSetting,
    ScanVariable, SourceSpec,
};
pub use error::{ConfigError, DataError, EstimateError, FitError, ModelError, RangeViolation};
pub use estimator::{BoundResult, CorrectedProbs, SinglesNormalization};
