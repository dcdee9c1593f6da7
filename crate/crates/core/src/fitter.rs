//! Inverted, offset Gaussian dip fits with 95% confidence intervals.
//!
//! Model: `y(tau) = B - A exp(-(tau - tau0)^2 / (2 w^2))` with the baseline `B`
//! fixed. The optimizer works on `(ln A, tau0, ln w)` so `A` and `w` stay
//! positive.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::FitError;

pub const MIN_POINTS: usize = 5;
const MAX_ITER: usize = 200;
const REL_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub x: f64,
    pub y: f64,
    /// Standard uncertainty of `y`; `None` or non-positive means unknown.
    pub sigma: Option<f64>,
}

impl DataPoint {
    pub fn new(x: f64, y: f64, sigma: Option<f64>) -> Self {
        Self { x, y, sigma }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DipModel {
    pub baseline: f64,
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
}

impl DipModel {
    pub fn eval(&self, x: f64) -> f64 {
        let z = (x - self.center) / self.width;
        self.baseline - self.amplitude * (-0.5 * z * z).exp()
    }

    pub fn minimum(&self) -> f64 {
        self.baseline - self.amplitude
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: DipModel,
    pub minimum: f64,
    /// 95% half-widths.
    pub ci_amplitude: f64,
    pub ci_center: f64,
    pub ci_width: f64,
    pub ci_minimum: f64,
    /// Lower half-width of the minimum, truncated at the physical floor of zero.
    pub ci_minimum_low: f64,
    pub rss: f64,
    pub reduced_chi_square: f64,
    pub n_points: usize,
    pub iterations: usize,
    /// False when some point lacked an uncertainty and the fit was unweighted.
    pub weighted: bool,
}

impl FitResult {
    /// Is `value` inside the (clamped) 95% interval of the minimum?
    pub fn minimum_ci_contains(&self, value: f64) -> bool {
        value >= self.minimum - self.ci_minimum_low && value <= self.minimum + self.ci_minimum
    }
}

fn weights(points: &[DataPoint]) -> (Vec<f64>, bool) {
    let weighted = points
        .iter()
        .all(|p| p.sigma.is_some_and(|s| s > 0.0 && s.is_finite()));
    let sig = points
        .iter()
        .map(|p| if weighted { p.sigma.unwrap() } else { 1.0 })
        .collect();
    (sig, weighted)
}

/// Residuals `(y - model) / sigma` and their Jacobian in `(ln A, tau0, ln w)`.
fn residuals(
    params: &[f64; 3],
    baseline: f64,
    points: &[DataPoint],
    sigma: &[f64],
    jac: Option<&mut Vec<[f64; 3]>>,
) -> Vec<f64> {
    let a = params[0].exp();
    let (c, w) = (params[1], params[2].exp());
    let mut rows = Vec::with_capacity(points.len());
    let res = points
        .iter()
        .zip(sigma)
        .map(|(p, &s)| {
            let z = (p.x - c) / w;
            let g = (-0.5 * z * z).exp();
            let model = baseline - a * g;
            // d model / d ln A = -A g; d/d tau0 = -A g z / w; d/d ln w = -A g z^2.
            rows.push([a * g / s, a * g * z / (w * s), a * g * z * z / s]);
            (p.y - model) / s
        })
        .collect();
    if let Some(j) = jac {
        *j = rows;
    }
    res
}

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn solve3(m: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let inv = invert3(m)?;
    Some([
        inv[0][0] * b[0] + inv[0][1] * b[1] + inv[0][2] * b[2],
        inv[1][0] * b[0] + inv[1][1] * b[1] + inv[1][2] * b[2],
        inv[2][0] * b[0] + inv[2][1] * b[1] + inv[2][2] * b[2],
    ])
}

fn invert3(m: [[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let cof = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let det = m[0][0] * cof(1, 2, 1, 2) - m[0][1] * cof(1, 2, 0, 2) + m[0][2] * cof(1, 2, 0, 1);
    if !det.is_finite() || det == 0.0 {
        return None;
    }
    let adj = [
        [cof(1, 2, 1, 2), -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
        [-cof(1, 2, 0, 2), cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
        [cof(1, 2, 0, 1), -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
    ];
    Some(adj.map(|row| row.map(|v| v / det)))
}

fn normal_matrix(jac: &[[f64; 3]]) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for row in jac {
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += row[i] * row[j];
            }
        }
    }
    m
}

/// Data-driven start: depth from the lowest point, centre at it, width from
/// the half-depth crossing.
fn initial_guess(points: &[DataPoint], baseline: f64) -> [f64; 3] {
    let p_min = points
        .iter()
        .min_by(|a, b| a.y.total_cmp(&b.y))
        .expect("non-empty");
    let depth = baseline - p_min.y;
    let span = {
        let lo = points.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    };
    let amplitude = if depth > 0.0 { depth } else { 1e-3 * baseline.abs().max(1e-3) };
    let half = baseline - amplitude / 2.0;
    let below: Vec<f64> = points.iter().filter(|p| p.y <= half).map(|p| p.x).collect();
    let hwhd = if below.len() >= 2 {
        let lo = below.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = below.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (hi - lo) / 2.0
    } else {
        0.0
    };
    let min_step = points
        .windows(2)
        .map(|w| (w[1].x - w[0].x).abs())
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min);
    let hwhd = if hwhd > 0.0 {
        hwhd
    } else if min_step.is_finite() {
        min_step
    } else {
        span.max(1.0) / 4.0
    };
    let width = hwhd / (2.0 * std::f64::consts::LN_2).sqrt();
    [amplitude.ln(), p_min.x, width.ln()]
}

/// Damped Gauss-Newton (Levenberg-Marquardt) fit of the dip.
pub fn fit_dip(points: &[DataPoint], baseline: f64) -> Result<FitResult, FitError> {
    if points.len() < MIN_POINTS {
        return Err(FitError::InsufficientPoints {
            needed: MIN_POINTS,
            got: points.len(),
        });
    }
    if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(FitError::FitDiverged("non-finite data".into()));
    }
    let (sigma, weighted) = weights(points);
    let mut params = initial_guess(points, baseline);
    let mut jac = Vec::new();
    let mut res = residuals(&params, baseline, points, &sigma, Some(&mut jac));
    let mut cost = sum_sq(&res);
    let mut lambda = 1e-3;
    let mut iterations = 0;

    while iterations < MAX_ITER {
        iterations += 1;
        let jtj = normal_matrix(&jac);
        let mut grad = [0.0; 3];
        for (row, r) in jac.iter().zip(&res) {
            for i in 0..3 {
                grad[i] += row[i] * r;
            }
        }
        let mut accepted = false;
        let mut converged = false;
        while lambda < 1e20 {
            let mut damped = jtj;
            for i in 0..3 {
                damped[i][i] += lambda * jtj[i][i].max(1e-300);
            }
            let Some(step) = solve3(damped, grad) else {
                lambda *= 10.0;
                continue;
            };
            // `jac` holds d(residual)/d(param), so the step is subtracted.
            let trial = [params[0] - step[0], params[1] - step[1], params[2] - step[2]];
            if trial.iter().any(|v| !v.is_finite()) {
                lambda *= 10.0;
                continue;
            }
            let trial_res = residuals(&trial, baseline, points, &sigma, None);
            let trial_cost = sum_sq(&trial_res);
            if trial_cost <= cost {
                let rel = step
                    .iter()
                    .zip(&trial)
                    .map(|(s, p)| s.abs() / p.abs().max(1.0))
                    .fold(0.0, f64::max);
                params = trial;
                res = residuals(&params, baseline, points, &sigma, Some(&mut jac));
                cost = trial_cost;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                converged = rel <= REL_TOL;
                break;
            }
            lambda *= 10.0;
        }
        if converged || !accepted {
            // No downhill step at any damping: at a minimum to working precision.
            break;
        }
    }
    if !cost.is_finite() {
        return Err(FitError::FitDiverged("non-finite residuals".into()));
    }

    let model = DipModel {
        baseline,
        amplitude: params[0].exp(),
        center: params[1],
        width: params[2].exp(),
    };
    let n = points.len();
    let dof = (n - 3) as f64;
    let reduced = cost / dof;
    let cov = invert3(normal_matrix(&jac))
        .ok_or_else(|| FitError::FitDiverged("singular normal matrix at solution".into()))?;
    let t = StudentsT::new(0.0, 1.0, dof)
        .map_err(|e| FitError::FitDiverged(e.to_string()))?
        .inverse_cdf(0.975);
    let half = |i: usize| t * (cov[i][i].max(0.0) * reduced).sqrt();
    // Delta method from log parameters.
    let ci_amplitude = model.amplitude * half(0);
    let ci_width = model.width * half(2);
    let minimum = model.minimum();
    Ok(FitResult {
        model,
        minimum,
        ci_amplitude,
        ci_center: half(1),
        ci_width,
        ci_minimum: ci_amplitude,
        ci_minimum_low: ci_amplitude.min(minimum.max(0.0)),
        rss: cost,
        reduced_chi_square: reduced,
        n_points: n,
        iterations,
        weighted,
    })
}

/// `sum(((y - yhat) / sigma)^2) / (n - 3)`; unit weights when any sigma is missing.
pub fn reduced_chi_square(points: &[DataPoint], fit: &FitResult) -> f64 {
    let (sigma, _) = weights(points);
    let chi2: f64 = points
        .iter()
        .zip(&sigma)
        .map(|(p, s)| ((p.y - fit.model.eval(p.x)) / s).powi(2))
        .sum();
    chi2 / (points.len() as f64 - 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn synthetic(model: DipModel, xs: &[f64], sigma: Option<f64>) -> Vec<DataPoint> {
        xs.iter()
            .map(|&x| DataPoint::new(x, model.eval(x), sigma))
            .collect()
    }

    fn grid21() -> Vec<f64> {
        (0..21).map(|i| -10.0 + i as f64).collect()
    }

    const TRUE: DipModel = DipModel {
        baseline: 1.0,
        amplitude: 0.5,
        center: 0.0,
        width: 2.0,
    };

    #[test]
    fn recovers_exact_model() {
        let fit = fit_dip(&synthetic(TRUE, &grid21(), None), 1.0).unwrap();
        assert!((fit.model.amplitude - 0.5).abs() < 1e-8);
        assert!(fit.model.center.abs() < 1e-8);
        assert!((fit.model.width - 2.0).abs() < 1e-8);
        assert!(!fit.weighted);
        assert!(fit.reduced_chi_square < 1e-20);
    }

    #[test]
    fn recovers_offset_unweighted_dip() {
        let m = DipModel {
            baseline: 0.5,
            amplitude: 0.49,
            center: 0.7,
            width: 0.3,
        };
        let xs: Vec<f64> = (0..17).map(|i| -2.0 + 0.25 * i as f64).collect();
        let fit = fit_dip(&synthetic(m, &xs, Some(0.01)), 0.5).unwrap();
        assert!((fit.model.center - 0.7).abs() < 1e-8);
        assert!((fit.minimum - 0.01).abs() < 1e-8);
        assert!(fit.weighted);
    }

    #[test]
    fn too_few_points() {
        let pts = synthetic(TRUE, &[0.0, 1.0, 2.0, 3.0], None);
        assert_eq!(
            fit_dip(&pts, 1.0),
            Err(FitError::InsufficientPoints { needed: 5, got: 4 })
        );
    }

    #[test]
    fn noisy_fit_parameters_stay_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noise = Normal::new(0.0, 0.2).unwrap();
        let pts: Vec<_> = grid21()
            .iter()
            .map(|&x| DataPoint::new(x, 1.0 + noise.sample(&mut rng), Some(0.2)))
            .collect();
        let fit = fit_dip(&pts, 1.0).unwrap();
        assert!(fit.model.amplitude > 0.0 && fit.model.width > 0.0);
    }

    fn noisy(seed: u64, sigma: f64) -> Vec<DataPoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sigma).unwrap();
        grid21()
            .iter()
            .map(|&x| DataPoint::new(x, TRUE.eval(x) + noise.sample(&mut rng), Some(sigma)))
            .collect()
    }

    #[test]
    fn shift_and_scale_equivariance() {
        let pts = noisy(7, 0.02);
        let base = fit_dip(&pts, 1.0).unwrap();
        let shifted: Vec<_> = pts.iter().map(|p| DataPoint { x: p.x + 3.25, ..*p }).collect();
        let s = fit_dip(&shifted, 1.0).unwrap();
        assert!((s.model.center - base.model.center - 3.25).abs() < 1e-8);
        assert!((s.model.amplitude - base.model.amplitude).abs() < 1e-8);
        let scaled: Vec<_> = pts.iter().map(|p| DataPoint { x: p.x * 2.5, ..*p }).collect();
        let s = fit_dip(&scaled, 1.0).unwrap();
        assert!((s.model.width - 2.5 * base.model.width).abs() < 1e-8);
        assert!((s.model.center - 2.5 * base.model.center).abs() < 1e-8);
    }

    #[test]
    fn reduced_chi_square_matches_fit() {
        let pts = noisy(3, 0.02);
        let fit = fit_dip(&pts, 1.0).unwrap();
        assert!((reduced_chi_square(&pts, &fit) - fit.reduced_chi_square).abs() < 1e-12);
        let exact = synthetic(TRUE, &grid21(), Some(0.02));
        let fit = fit_dip(&exact, 1.0).unwrap();
        assert!(reduced_chi_square(&exact, &fit) < 1e-16);
    }

    #[test]
    fn clamps_lower_interval_at_zero() {
        let m = DipModel {
            baseline: 0.5,
            amplitude: 0.495,
            center: 0.0,
            width: 1.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let pts: Vec<_> = grid21()
            .iter()
            .map(|&x| DataPoint::new(x * 0.4, m.eval(x * 0.4) + noise.sample(&mut rng), Some(0.01)))
            .collect();
        let fit = fit_dip(&pts, 0.5).unwrap();
        assert!(fit.ci_minimum_low <= fit.ci_minimum);
        assert!(fit.minimum - fit.ci_minimum_low >= 0.0 || fit.minimum < 0.0);
    }
}
