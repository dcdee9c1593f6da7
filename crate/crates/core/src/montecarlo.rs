//! Seeded pulse-by-pulse simulation of the four-setting protocol.
//!
//! Every pulse carries a fresh uniform relative phase; given the phase each
//! detector clicks independently with its phase-conditioned probability.
//!
//! Sampling uses thinning on the event "some detector clicks". Candidate
//! pulses arrive as Bernoulli trials at a phase-independent ceiling (drawn as
//! geometric gaps); each candidate gets its phase and is kept with
//! probability `P(any click | phi) / ceiling`, and the same uniform then picks
//! the click pattern. Pulses that are not candidates never click, so only
//! candidates need a phase. The joint law of the clicks is exactly that of
//! per-pulse sampling.
//!
//! Random streams are ChaCha8 with the master seed as key and a stream id
//! packed from (setting, trial, grid index, pulse block). Blocks run in
//! parallel and their counts are summed, so results do not depend on the
//! thread count.

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Exp1};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::PulseModel;
use crate::config::{Config, CountRecord, ExperimentSet, ProtocolSetting, ScanVariable};
use crate::error::ConfigError;

/// Pulses per independently seeded block.
pub const BLOCK_PULSES: u64 = 1 << 24;

const MAX_TRIALS: usize = 1 << 14;
const MAX_GRID: usize = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RunPlan {
    pub config: Config,
    /// Pulses per setting per trial.
    pub n_pulses: u64,
    pub n_trials: usize,
    pub master_seed: u64,
    pub grid_index: usize,
}

impl RunPlan {
    pub fn new(config: Config, n_pulses: u64, n_trials: usize, master_seed: u64) -> Self {
        assert!(n_pulses > 0, "n_pulses must be positive");
        assert!((1..=MAX_TRIALS).contains(&n_trials), "n_trials out of range");
        assert!(
            n_pulses.div_ceil(BLOCK_PULSES) <= u32::MAX as u64,
            "n_pulses too large"
        );
        Self {
            config,
            n_pulses,
            n_trials,
            master_seed,
            grid_index: 0,
        }
    }

    pub fn with_grid_index(mut self, grid_index: usize) -> Self {
        assert!(grid_index < MAX_GRID, "grid index out of range");
        self.grid_index = grid_index;
        self
    }
}

/// Stream id of one pulse block: `setting:2 | trial:14 | grid:16 | block:32`.
pub fn stream_id(setting: ProtocolSetting, trial: usize, grid_index: usize, block: u64) -> u64 {
    debug_assert!(trial < MAX_TRIALS && grid_index < MAX_GRID && block <= u32::MAX as u64);
    ((setting.index() as u64) << 62) | ((trial as u64) << 48) | ((grid_index as u64) << 32) | block
}

pub fn block_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct Counts {
    s1: u64,
    s2: u64,
    cc: u64,
}

impl std::ops::Add for Counts {
    type Output = Counts;

    fn add(self, o: Counts) -> Counts {
        Counts {
            s1: self.s1 + o.s1,
            s2: self.s2 + o.s2,
            cc: self.cc + o.cc,
        }
    }
}

/// Number of failures before the next success of a Bernoulli(`p`) sequence.
struct Gaps {
    inv_log_miss: f64,
}

impl Gaps {
    fn new(p: f64) -> Self {
        Self {
            inv_log_miss: 1.0 / (-p).ln_1p(),
        }
    }

    #[inline]
    fn sample(&self, rng: &mut ChaCha8Rng) -> u64 {
        if self.inv_log_miss == 0.0 {
            return 0;
        }
        if self.inv_log_miss == f64::NEG_INFINITY || self.inv_log_miss.is_nan() {
            return u64::MAX;
        }
        // Floor of an exponential variate over -ln(1 - p); `as` saturates.
        let e: f64 = Exp1.sample(rng);
        (-e * self.inv_log_miss) as u64
    }
}

/// `sin(phi)` for a uniform phase. A uniform point in the unit disk has a
/// uniform angle `theta`, and `sin(2 theta) = 2xy / r^2` needs no root.
#[inline]
fn sin_uniform_phase(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let x = 2.0 * rng.random::<f64>() - 1.0;
        let y = 2.0 * rng.random::<f64>() - 1.0;
        let r2 = x * x + y * y;
        if r2 > 0.0 && r2 <= 1.0 {
            return 2.0 * x * y / r2;
        }
    }
}

fn any_click((q1, q2): (f64, f64)) -> f64 {
    q1 + q2 - q1 * q2
}

fn simulate_block(model: &PulseModel, rng: &mut ChaCha8Rng, n: u64) -> Counts {
    let exact = model.is_phase_independent();
    // The exponent of the no-click probability is convex in sin(phi), so the
    // ceiling sits at sin(phi) = +-1.
    let ceiling = if exact {
        any_click(model.click_probs_at(0.0))
    } else {
        any_click(model.click_probs_at(1.0)).max(any_click(model.click_probs_at(-1.0)))
    };
    let gaps = Gaps::new(ceiling);
    let mut counts = Counts::default();
    let mut pos = gaps.sample(rng);
    while pos < n {
        let sin_phi = if exact { 0.0 } else { sin_uniform_phase(rng) };
        let (q1, q2) = model.click_probs_at(sin_phi);
        // Uniform on [0, ceiling): below P(any click | phi) it also picks the
        // click pattern.
        let v = rng.random::<f64>() * ceiling;
        let only1 = q1 * (1.0 - q2);
        let only2 = q2 * (1.0 - q1);
        if v < only1 {
            counts.s1 += 1;
        } else if v < only1 + only2 {
            counts.s2 += 1;
        } else if v < any_click((q1, q2)) {
            counts.s1 += 1;
            counts.s2 += 1;
            counts.cc += 1;
        }
        pos = pos.saturating_add(1).saturating_add(gaps.sample(rng));
    }
    counts
}

/// Counts of one setting in one trial.
pub fn simulate_setting(plan: &RunPlan, setting: ProtocolSetting, trial: usize) -> CountRecord {
    let model = PulseModel::new(&plan.config.for_setting(setting));
    let n_blocks = plan.n_pulses.div_ceil(BLOCK_PULSES);
    let counts = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let len = BLOCK_PULSES.min(plan.n_pulses - b * BLOCK_PULSES);
            let mut rng = block_rng(
                plan.master_seed,
                stream_id(setting, trial, plan.grid_index, b),
            );
            simulate_block(&model, &mut rng, len)
        })
        .reduce(Counts::default, |a, b| a + b);
    CountRecord {
        setting,
        trial,
        n_pulses: plan.n_pulses,
        singles_d1: counts.s1,
        singles_d2: counts.s2,
        coincidences: counts.cc,
    }
}

/// All four settings for every trial.
pub fn run_protocol(plan: &RunPlan) -> ExperimentSet {
    let records: Vec<CountRecord> = (0..plan.n_trials)
        .flat_map(|t| ProtocolSetting::ALL.map(|s| (s, t)))
        .map(|(s, t)| simulate_setting(plan, s, t))
        .collect();
    ExperimentSet::new(records).expect("simulated records are complete and consistent")
}

/// One protocol run per grid value; substreams are keyed by the grid index.
pub fn scan(
    template: &RunPlan,
    variable: ScanVariable,
    grid: &[f64],
) -> Result<Vec<(f64, ExperimentSet)>, ConfigError> {
    assert!(grid.len() <= MAX_GRID, "grid too long");
    grid.iter()
        .enumerate()
        .map(|(i, &value)| {
            let plan = RunPlan {
                config: template.config.with_variable(variable, value)?,
                ..*template
            }
            .with_grid_index(i);
            Ok((value, run_protocol(&plan)))
        })
        .collect()
}
