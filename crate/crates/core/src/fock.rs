//! Truncated Fock-space oracle.
//!
//! Computes click probabilities photon number by photon number, independently
//! of the phase-averaged model: Poisson-weighted Fock inputs, exact two-mode
//! beamsplitter scattering, and per-photon detection.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_complex::Complex64;

use crate::analytic::ClickProbabilities;
use crate::config::{Config, DetectorSpec, OpticsSpec, SourceSpec};
use crate::error::ModelError;

/// Maximum neglected Poisson mass accepted by the oracle.
pub const TAIL_LIMIT: f64 = 1e-12;

/// Photon-number cutoff shared by the three input modes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FockTruncation {
    pub n_max: usize,
    /// Total Poisson mass beyond `n_max`, summed over the input modes.
    pub tail_bound: f64,
}

impl FockTruncation {
    /// Evaluates the neglected mass of a fixed cutoff for `source`.
    pub fn with_n_max(n_max: usize, source: &SourceSpec) -> Self {
        let tail_bound = mode_means(source)
            .iter()
            .map(|&m| poisson_tail(n_max, m))
            .sum();
        Self { n_max, tail_bound }
    }

    /// Smallest cutoff (at least 1) whose neglected mass is within [`TAIL_LIMIT`].
    pub fn for_source(source: &SourceSpec) -> Self {
        (1..)
            .map(|n| Self::with_n_max(n, source))
            .find(|t| t.tail_bound <= TAIL_LIMIT)
            .expect("Poisson tails vanish")
    }
}

/// Means of the matched `a` mode, matched `b` mode and orthogonal `b` mode.
fn mode_means(source: &SourceSpec) -> [f64; 3] {
    let d2 = source.effective_overlap().powi(2);
    [source.mu_a, d2 * source.mu_b, (1.0 - d2) * source.mu_b]
}

fn poisson(n: usize, mean: f64) -> f64 {
    if mean == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    (n as f64 * mean.ln() - mean - ln_factorial(n)).exp()
}

/// `P(N > n_max)` summed term by term, so it stays accurate far below 1e-16.
fn poisson_tail(n_max: usize, mean: f64) -> f64 {
    if mean == 0.0 {
        return 0.0;
    }
    let mut term = poisson(n_max + 1, mean);
    let mut sum = 0.0;
    let mut n = n_max + 1;
    while term > sum * 1e-18 && n < n_max + 1000 {
        sum += term;
        n += 1;
        term *= mean / n as f64;
    }
    sum
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

fn binomial(n: usize, k: usize) -> f64 {
    (ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k))
        .exp()
        .round()
}

/// Output distribution for one Fock input `|n_a, n_b>`.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputDistribution {
    pub n_a: usize,
    pub n_b: usize,
    /// Indexed by `n_c`; `n_d = n_a + n_b - n_c`.
    pub probs: Vec<f64>,
}

impl OutputDistribution {
    pub fn total(&self) -> usize {
        self.n_a + self.n_b
    }

    /// `P(n_c, n_d | n_a, n_b)`, zero off the photon-conserving diagonal.
    pub fn prob(&self, n_c: usize, n_d: usize) -> f64 {
        if n_c + n_d != self.total() {
            return 0.0;
        }
        self.probs[n_c]
    }
}

/// Scatters `|n_a, n_b>` on the beamsplitter.
///
/// Creation operators map as `a† -> sqrt(T) c† + i sqrt(R) d†` and
/// `b† -> i sqrt(R) c† + sqrt(T) d†`; the amplitude of `|n_c, n_d>` is the sum
/// over every way of routing `j` photons of `a` and `k = n_c - j` photons of `b`
/// to port `c`.
pub fn beamsplitter_fock_row(n_a: usize, n_b: usize, optics: &OpticsSpec) -> OutputDistribution {
    let (t, r) = (optics.t().sqrt(), optics.r().sqrt());
    let total = n_a + n_b;
    let i_pow = [
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 1.0),
        Complex64::new(-1.0, 0.0),
        Complex64::new(0.0, -1.0),
    ];
    let probs = (0..=total)
        .map(|n_c| {
            let n_d = total - n_c;
            let mut amp = Complex64::new(0.0, 0.0);
            for j in n_c.saturating_sub(n_b)..=n_c.min(n_a) {
                let k = n_c - j;
                // j of a -> c (sqrt T), n_a - j of a -> d (i sqrt R),
                // k of b -> c (i sqrt R), n_b - k of b -> d (sqrt T).
                let mag = binomial(n_a, j)
                    * binomial(n_b, k)
                    * t.powi((j + n_b - k) as i32)
                    * r.powi((n_a - j + k) as i32);
                amp += i_pow[(n_a - j + k) % 4] * mag;
            }
            let norm = (0.5
                * (ln_factorial(n_c) + ln_factorial(n_d) - ln_factorial(n_a) - ln_factorial(n_b)))
            .exp();
            (amp * norm).norm_sqr()
        })
        .collect();
    OutputDistribution { n_a, n_b, probs }
}

/// Every row with `n_a, n_b <= n_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalTable {
    pub rows: BTreeMap<(usize, usize), OutputDistribution>,
}

impl ConditionalTable {
    pub fn build(n_max: usize, optics: &OpticsSpec) -> Self {
        let mut rows = BTreeMap::new();
        for n_a in 0..=n_max {
            for n_b in 0..=n_max {
                rows.insert((n_a, n_b), beamsplitter_fock_row(n_a, n_b, optics));
            }
        }
        Self { rows }
    }

    /// Flat `n_a,n_b,n_c,n_d,p` listing.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n_a,n_b,n_c,n_d,p\n");
        for ((a, b), row) in &self.rows {
            for (c, p) in row.probs.iter().enumerate() {
                let _ = writeln!(out, "{a},{b},{c},{},{p}", a + b - c);
            }
        }
        out
    }
}

/// Probability that a threshold detector clicks with `n` photons incident.
fn photon_click(kappa: f64, dark: f64, n: usize) -> f64 {
    let miss = if n == 0 {
        1.0
    } else if kappa >= 1.0 {
        0.0
    } else {
        (n as f64 * (-kappa).ln_1p()).exp()
    };
    1.0 - (1.0 - dark) * miss
}

/// Click probabilities by explicit photon-number summation.
///
/// Arm `a` is `Poisson(mu_a)` in the matched mode. Arm `b` splits into
/// `Poisson(delta_eff^2 mu_b)` in the matched mode and
/// `Poisson((1 - delta_eff^2) mu_b)` in an orthogonal mode. Phase
/// randomization turns the matched pair into a mixture of Fock inputs; the
/// orthogonal photons reach port `c` with probability `R` each, without
/// interference.
pub fn oracle_click_probs(
    source: &SourceSpec,
    optics: &OpticsSpec,
    detectors: &DetectorSpec,
    trunc: &FockTruncation,
) -> Result<ClickProbabilities, ModelError> {
    let checked = FockTruncation::with_n_max(trunc.n_max, source);
    if checked.tail_bound > TAIL_LIMIT {
        return Err(ModelError::TruncationInsufficient {
            n_max: trunc.n_max,
            tail: checked.tail_bound,
        });
    }
    let n_max = trunc.n_max;
    let [m_a, m_b, m_o] = mode_means(source);
    let pa: Vec<f64> = (0..=n_max).map(|n| poisson(n, m_a)).collect();
    let pb: Vec<f64> = (0..=n_max).map(|n| poisson(n, m_b)).collect();
    let po: Vec<f64> = (0..=n_max).map(|n| poisson(n, m_o)).collect();

    // Joint distribution of orthogonal photons at (c, d).
    let mut orth = Vec::new();
    for (m, &w) in po.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for mc in 0..=m {
            let p = w
                * binomial(m, mc)
                * optics.r().powi(mc as i32)
                * optics.t().powi((m - mc) as i32);
            orth.push((mc, m - mc, p));
        }
    }

    let click1: Vec<f64> = (0..=4 * n_max)
        .map(|n| photon_click(detectors.kappa1, detectors.dark1, n))
        .collect();
    let click2: Vec<f64> = (0..=4 * n_max)
        .map(|n| photon_click(detectors.kappa2, detectors.dark2, n))
        .collect();

    let (mut s1, mut s2, mut cc) = (0.0, 0.0, 0.0);
    for (n_a, &wa) in pa.iter().enumerate() {
        for (n_b, &wb) in pb.iter().enumerate() {
            let w = wa * wb;
            if w == 0.0 {
                continue;
            }
            let row = beamsplitter_fock_row(n_a, n_b, optics);
            for (n_c, &p) in row.probs.iter().enumerate() {
                let n_d = row.total() - n_c;
                let wp = w * p;
                for &(oc, od, po) in &orth {
                    let q1 = click1[n_c + oc];
                    let q2 = click2[n_d + od];
                    let x = wp * po;
                    s1 += x * q1;
                    s2 += x * q2;
                    cc += x * q1 * q2;
                }
            }
        }
    }
    Ok(ClickProbabilities {
        p_s1: s1,
        p_s2: s2,
        p_cc: cc,
    })
}

/// Ground-truth coincidence probability for one photon in each input.
pub fn true_p11(optics: &OpticsSpec) -> f64 {
    beamsplitter_fock_row(1, 1, optics).prob(1, 1)
}

/// Parameter grid used to cross-check the phase-averaged model against the
/// oracle: mean photon number, overlap, reflectivity, efficiency, dark rate.
pub const VALIDATION_MU: [f64; 4] = [0.01, 0.05, 0.2, 0.5];
pub const VALIDATION_DELTA: [f64; 4] = [0.0, 0.5, 0.985, 1.0];
pub const VALIDATION_R: [f64; 3] = [0.5, 0.52, 0.54];
pub const VALIDATION_KAPPA: [f64; 3] = [0.3, 0.6, 1.0];
pub const VALIDATION_DARK: [f64; 2] = [0.0, 1e-4];

/// Every combination of the validation axes, symmetric in both arms.
pub fn validation_grid() -> Vec<Config> {
    let mut out = Vec::with_capacity(4 * 4 * 3 * 3 * 2);
    for mu in VALIDATION_MU {
        for delta in VALIDATION_DELTA {
            for r in VALIDATION_R {
                for kappa in VALIDATION_KAPPA {
                    for dark in VALIDATION_DARK {
                        out.push(
                            Config::new(
                                SourceSpec::symmetric(mu, delta),
                                OpticsSpec::new(r),
                                DetectorSpec::symmetric(kappa, dark),
                            )
                            .expect("validation grid values are in range"),
                        );
                    }
                }
            }
        }
    }
    out
}
