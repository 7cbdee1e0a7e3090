//! Maximum-likelihood fitting of the four increment models.
//!
//! Linear Wiener and homogeneous gamma fits are closed form (Wiener) or a
//! one-dimensional Newton solve (gamma shape). The nonlinear variants
//! profile the time-transform exponent `beta` over a log-spaced grid and
//! refine the best bracket with golden-section search; for each fixed
//! `beta` the remaining parameters are again closed form or Newton.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_space::CandidateModel;
use crate::sim::{d_j, ProcessKind};
use crate::special::{digamma, ln_gamma, trigamma};
use crate::trajectory::Trajectory;

pub const VARIANCE_FLOOR: f64 = 1e-12;
pub const SHAPE_MAX: f64 = 1e6;
const NEWTON_MAX_ITER: usize = 100;
const NEWTON_TOL: f64 = 1e-10;

/// First differences of a trajectory with their 1-based step indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementSeries {
    pub deltas: Vec<f64>,
    pub step_indices: Vec<usize>,
}

impl IncrementSeries {
    pub fn new(deltas: Vec<f64>, step_indices: Vec<usize>) -> Result<Self> {
        if deltas.len() != step_indices.len() {
            return Err(Error::Contract(
                "deltas and step indices differ in length".into(),
            ));
        }
        if step_indices.first() == Some(&0) || step_indices.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Contract(
                "step indices must be >= 1 and strictly increasing".into(),
            ));
        }
        Ok(IncrementSeries {
            deltas,
            step_indices,
        })
    }

    /// Series indexed `1..=n`.
    pub fn from_deltas(deltas: Vec<f64>) -> Self {
        let step_indices = (1..=deltas.len()).collect();
        IncrementSeries {
            deltas,
            step_indices,
        }
    }

    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }

    /// Contiguous sub-series keeping the original step indices.
    pub fn slice(&self, range: std::ops::Range<usize>) -> IncrementSeries {
        IncrementSeries {
            deltas: self.deltas[range.clone()].to_vec(),
            step_indices: self.step_indices[range].to_vec(),
        }
    }

    /// Concatenation of two disjoint, ordered pieces.
    pub fn concat(&self, other: &IncrementSeries) -> IncrementSeries {
        let mut deltas = self.deltas.clone();
        deltas.extend_from_slice(&other.deltas);
        let mut step_indices = self.step_indices.clone();
        step_indices.extend_from_slice(&other.step_indices);
        IncrementSeries {
            deltas,
            step_indices,
        }
    }

    fn time_scale(&self, beta: f64) -> Vec<f64> {
        self.step_indices.iter().map(|&j| d_j(j, beta)).collect()
    }
}

pub fn increments(traj: &Trajectory) -> Result<IncrementSeries> {
    if traj.len() < 2 {
        return Err(Error::InvalidTrajectory(format!(
            "{}: need at least 2 points for increments",
            traj.unit_id
        )));
    }
    let deltas = traj.values.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(IncrementSeries::from_deltas(deltas))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ModelParams {
    LinearWiener { m: f64, s: f64 },
    NonlinearWiener { m: f64, s: f64, beta: f64 },
    HomogGamma { alpha: f64, theta: f64 },
    NonHomogGamma { alpha: f64, theta: f64, beta: f64 },
}

impl ModelParams {
    pub fn kind(&self) -> ProcessKind {
        match self {
            ModelParams::LinearWiener { .. } => ProcessKind::LinearWiener,
            ModelParams::NonlinearWiener { .. } => ProcessKind::NonlinearWiener,
            ModelParams::HomogGamma { .. } => ProcessKind::HomogGamma,
            ModelParams::NonHomogGamma { .. } => ProcessKind::NonHomogGamma,
        }
    }

    /// Free parameters in a fixed order (used by gradient checks).
    pub fn to_vec(&self) -> Vec<f64> {
        match *self {
            ModelParams::LinearWiener { m, s } => vec![m, s],
            ModelParams::NonlinearWiener { m, s, beta } => vec![m, s, beta],
            ModelParams::HomogGamma { alpha, theta } => vec![alpha, theta],
            ModelParams::NonHomogGamma { alpha, theta, beta } => vec![alpha, theta, beta],
        }
    }

    pub fn from_vec(kind: ProcessKind, v: &[f64]) -> Result<ModelParams> {
        let need = kind.param_count();
        if v.len() != need {
            return Err(Error::Contract(format!(
                "{kind} takes {need} parameters, got {}",
                v.len()
            )));
        }
        Ok(match kind {
            ProcessKind::LinearWiener => ModelParams::LinearWiener { m: v[0], s: v[1] },
            ProcessKind::NonlinearWiener => ModelParams::NonlinearWiener {
                m: v[0],
                s: v[1],
                beta: v[2],
            },
            ProcessKind::HomogGamma => ModelParams::HomogGamma {
                alpha: v[0],
                theta: v[1],
            },
            ProcessKind::NonHomogGamma => ModelParams::NonHomogGamma {
                alpha: v[0],
                theta: v[1],
                beta: v[2],
            },
        })
    }

    fn validate(&self) -> Result<()> {
        let positive = match *self {
            ModelParams::LinearWiener { m, s } => m.is_finite() && s > 0.0,
            ModelParams::NonlinearWiener { m, s, beta } => m.is_finite() && s > 0.0 && beta > 0.0,
            ModelParams::HomogGamma { alpha, theta } => alpha > 0.0 && theta > 0.0,
            ModelParams::NonHomogGamma { alpha, theta, beta } => {
                alpha > 0.0 && theta > 0.0 && beta > 0.0
            }
        };
        let finite = self.to_vec().iter().all(|v| v.is_finite());
        if positive && finite {
            Ok(())
        } else {
            Err(Error::Contract(format!("invalid parameters {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model_id: String,
    pub params: ModelParams,
    pub loglik: f64,
    pub k: usize,
    pub converged: bool,
    pub iterations: usize,
}

/// Numerical settings shared by the fitters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub beta_min: f64,
    pub beta_max: f64,
    pub grid_points: usize,
    pub beta_tol: f64,
    /// Floor the Wiener variance instead of rejecting degenerate data.
    /// Only meant for noise-free test inputs.
    pub clamp_variance: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            beta_min: 0.2,
            beta_max: 5.0,
            grid_points: 25,
            beta_tol: 1e-10,
            clamp_variance: false,
        }
    }
}

impl FitOptions {
    fn validate(&self) -> Result<()> {
        if !(self.beta_min > 0.0
            && self.beta_max > self.beta_min
            && self.grid_points >= 3
            && self.beta_tol > 0.0)
        {
            return Err(Error::Config(format!(
                "invalid beta search settings {self:?}"
            )));
        }
        Ok(())
    }
}

fn require(model: &'static str, inc: &IncrementSeries, needed: usize) -> Result<()> {
    if inc.len() < needed {
        return Err(Error::TooFewIncrements {
            model,
            needed,
            got: inc.len(),
        });
    }
    Ok(())
}

fn require_positive(inc: &IncrementSeries) -> Result<()> {
    match inc.deltas.iter().position(|&d| !(d > 0.0)) {
        Some(i) => Err(Error::NonPositiveIncrement {
            step: inc.step_indices[i],
            value: inc.deltas[i],
        }),
        None => Ok(()),
    }
}

fn normal_loglik(n: usize, var: f64) -> f64 {
    -0.5 * n as f64 * ((2.0 * PI * var).ln() + 1.0)
}

pub fn fit_linear_wiener(inc: &IncrementSeries) -> Result<FitResult> {
    fit_linear_wiener_with(inc, &FitOptions::default())
}

pub fn fit_linear_wiener_with(inc: &IncrementSeries, opts: &FitOptions) -> Result<FitResult> {
    require("LinearWiener", inc, 3)?;
    let n = inc.len() as f64;
    let m = inc.deltas.iter().sum::<f64>() / n;
    let var = inc.deltas.iter().map(|d| (d - m).powi(2)).sum::<f64>() / n;
    let var = checked_variance(var, opts)?;
    Ok(FitResult {
        model_id: ProcessKind::LinearWiener.model_id().into(),
        params: ModelParams::LinearWiener { m, s: var.sqrt() },
        loglik: normal_loglik(inc.len(), var),
        k: 2,
        converged: true,
        iterations: 0,
    })
}

fn checked_variance(var: f64, opts: &FitOptions) -> Result<f64> {
    if var < VARIANCE_FLOOR {
        if opts.clamp_variance {
            return Ok(VARIANCE_FLOOR);
        }
        return Err(Error::DegenerateVariance(var));
    }
    Ok(var)
}

/// Closed-form Wiener fit for fixed `beta`: `(m, variance)`.
fn wiener_at_beta(inc: &IncrementSeries, beta: f64) -> (f64, f64) {
    let d = inc.time_scale(beta);
    let sdd: f64 = d.iter().map(|x| x * x).sum();
    let sxd: f64 = inc.deltas.iter().zip(&d).map(|(x, dj)| x * dj).sum();
    let m = sxd / sdd;
    let var = inc
        .deltas
        .iter()
        .zip(&d)
        .map(|(x, dj)| (x - m * dj).powi(2))
        .sum::<f64>()
        / inc.len() as f64;
    (m, var)
}

pub fn fit_nonlinear_wiener(inc: &IncrementSeries) -> Result<FitResult> {
    fit_nonlinear_wiener_with(inc, &FitOptions::default())
}

pub fn fit_nonlinear_wiener_with(inc: &IncrementSeries, opts: &FitOptions) -> Result<FitResult> {
    require("NonlinearWiener", inc, 4)?;
    opts.validate()?;
    let n = inc.len();
    let profile = |beta: f64| {
        let (_, var) = wiener_at_beta(inc, beta);
        let ll = normal_loglik(n, var.max(VARIANCE_FLOOR));
        ll.is_finite().then_some(ll)
    };
    let best = profile_maximize(profile, opts).ok_or(Error::NonFiniteLikelihood)?;
    let (m, var) = wiener_at_beta(inc, best.beta);
    let var = checked_variance(var, opts)?;
    let loglik = normal_loglik(n, var);
    if !loglik.is_finite() {
        return Err(Error::NonFiniteLikelihood);
    }
    Ok(FitResult {
        model_id: ProcessKind::NonlinearWiener.model_id().into(),
        params: ModelParams::NonlinearWiener {
            m,
            s: var.sqrt(),
            beta: best.beta,
        },
        loglik,
        k: 3,
        converged: best.converged,
        iterations: best.evaluations,
    })
}

/// Solution of the gamma score equations for a fixed time scale `d`.
struct GammaSolve {
    alpha: f64,
    theta: f64,
    loglik: f64,
    converged: bool,
    iterations: usize,
}

/// Maximizes `sum log Gamma(delta_j; alpha*d_j, theta)` over `(alpha, theta)`.
///
/// The scale score gives `theta = sum(delta) / (alpha * sum(d))`; substituting
/// it leaves one equation in `alpha`, solved by safeguarded Newton from the
/// moment estimate.
fn solve_gamma(deltas: &[f64], d: &[f64], sum_d_log_delta: f64) -> GammaSolve {
    let total_d: f64 = d.iter().sum();
    let total: f64 = deltas.iter().sum();
    let rate = total / total_d;

    // Moment start: alpha*theta = rate, alpha*theta^2*sum(d) = sum resid^2.
    let resid2: f64 = deltas
        .iter()
        .zip(d)
        .map(|(x, dj)| (x - rate * dj).powi(2))
        .sum();
    let theta0 = resid2 / (rate * total_d);
    let mut alpha = if theta0 > 0.0 {
        rate / theta0
    } else {
        SHAPE_MAX
    };
    alpha = alpha.clamp(1e-8, SHAPE_MAX);

    let c = sum_d_log_delta - total_d * rate.ln();
    let score =
        |a: f64| c + total_d * a.ln() - d.iter().map(|&dj| dj * digamma(a * dj)).sum::<f64>();
    let slope = |a: f64| total_d / a - d.iter().map(|&dj| dj * dj * trigamma(a * dj)).sum::<f64>();

    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=NEWTON_MAX_ITER {
        iterations = it;
        let g = score(alpha);
        let gp = slope(alpha);
        if !g.is_finite() || !gp.is_finite() || gp >= 0.0 {
            break;
        }
        let mut next = alpha - g / gp;
        if next <= 0.0 {
            next = alpha / 10.0;
        }
        if next >= SHAPE_MAX {
            alpha = SHAPE_MAX;
            break;
        }
        let step = (next - alpha).abs();
        alpha = next;
        if step <= NEWTON_TOL * alpha.max(1.0) {
            converged = true;
            break;
        }
    }
    let theta = rate / alpha;
    let loglik = gamma_loglik_scaled(deltas, d, alpha, theta);
    GammaSolve {
        alpha,
        theta,
        loglik,
        converged,
        iterations,
    }
}

fn gamma_loglik_scaled(deltas: &[f64], d: &[f64], alpha: f64, theta: f64) -> f64 {
    let ln_theta = theta.ln();
    deltas
        .iter()
        .zip(d)
        .map(|(&x, &dj)| {
            let shape = alpha * dj;
            (shape - 1.0) * x.ln() - x / theta - ln_gamma(shape) - shape * ln_theta
        })
        .sum()
}

pub fn fit_homog_gamma(inc: &IncrementSeries) -> Result<FitResult> {
    require("HomogGamma", inc, 3)?;
    require_positive(inc)?;
    let n = inc.len() as f64;
    let mean = inc.deltas.iter().sum::<f64>() / n;
    let mean_log = inc.deltas.iter().map(|d| d.ln()).sum::<f64>() / n;
    let var = inc.deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    // log(alpha) - digamma(alpha) = log(mean) - mean(log)
    let target = mean.ln() - mean_log;

    let mut alpha = if var > 0.0 {
        (mean * mean / var).clamp(1e-8, SHAPE_MAX)
    } else {
        SHAPE_MAX
    };
    let mut converged = false;
    let mut iterations = 0;
    if target > 0.0 {
        for it in 1..=NEWTON_MAX_ITER {
            iterations = it;
            let g = alpha.ln() - digamma(alpha) - target;
            let gp = 1.0 / alpha - trigamma(alpha);
            if !g.is_finite() || !gp.is_finite() || gp >= 0.0 {
                break;
            }
            let mut next = alpha - g / gp;
            if next <= 0.0 {
                next = alpha / 10.0;
            }
            if next >= SHAPE_MAX {
                alpha = SHAPE_MAX;
                break;
            }
            let step = (next - alpha).abs();
            alpha = next;
            if step <= NEWTON_TOL * alpha.max(1.0) {
                converged = true;
                break;
            }
        }
    } else {
        alpha = SHAPE_MAX;
    }
    let theta = mean / alpha;
    let ones = vec![1.0; inc.len()];
    let loglik = gamma_loglik_scaled(&inc.deltas, &ones, alpha, theta);
    if !loglik.is_finite() {
        return Err(Error::NonFiniteLikelihood);
    }
    Ok(FitResult {
        model_id: ProcessKind::HomogGamma.model_id().into(),
        params: ModelParams::HomogGamma { alpha, theta },
        loglik,
        k: 2,
        converged,
        iterations,
    })
}

pub fn fit_nonhomog_gamma(inc: &IncrementSeries) -> Result<FitResult> {
    fit_nonhomog_gamma_with(inc, &FitOptions::default())
}

pub fn fit_nonhomog_gamma_with(inc: &IncrementSeries, opts: &FitOptions) -> Result<FitResult> {
    require("NonHomogGamma", inc, 4)?;
    require_positive(inc)?;
    opts.validate()?;
    let log_deltas: Vec<f64> = inc.deltas.iter().map(|x| x.ln()).collect();
    let solve_at = |beta: f64| {
        let d = inc.time_scale(beta);
        let sdl: f64 = d.iter().zip(&log_deltas).map(|(a, b)| a * b).sum();
        solve_gamma(&inc.deltas, &d, sdl)
    };
    let best = profile_maximize(
        |beta| {
            let ll = solve_at(beta).loglik;
            ll.is_finite().then_some(ll)
        },
        opts,
    )
    .ok_or(Error::NonFiniteLikelihood)?;
    let fit = solve_at(best.beta);
    if !fit.loglik.is_finite() {
        return Err(Error::NonFiniteLikelihood);
    }
    Ok(FitResult {
        model_id: ProcessKind::NonHomogGamma.model_id().into(),
        params: ModelParams::NonHomogGamma {
            alpha: fit.alpha,
            theta: fit.theta,
            beta: best.beta,
        },
        loglik: fit.loglik,
        k: 3,
        converged: best.converged && fit.converged,
        iterations: best.evaluations + fit.iterations,
    })
}

/// Fits the process matching `kind`.
pub fn fit_kind(kind: ProcessKind, inc: &IncrementSeries, opts: &FitOptions) -> Result<FitResult> {
    match kind {
        ProcessKind::LinearWiener => fit_linear_wiener_with(inc, opts),
        ProcessKind::NonlinearWiener => fit_nonlinear_wiener_with(inc, opts),
        ProcessKind::HomogGamma => fit_homog_gamma(inc),
        ProcessKind::NonHomogGamma => fit_nonhomog_gamma_with(inc, opts),
    }
}

/// Minimum number of increments the fitter of `kind` accepts.
pub fn min_increments(kind: ProcessKind) -> usize {
    if kind.is_nonlinear() {
        4
    } else {
        3
    }
}

struct ProfileMax {
    beta: f64,
    evaluations: usize,
    converged: bool,
}

/// Maximizes a profile likelihood over `beta` in `[beta_min, beta_max]`:
/// log-spaced grid (always including `beta = 1`), then golden-section
/// search between the neighbours of the best grid point.
fn profile_maximize<F: Fn(f64) -> Option<f64>>(f: F, opts: &FitOptions) -> Option<ProfileMax> {
    let (lo, hi) = (opts.beta_min.ln(), opts.beta_max.ln());
    let steps = opts.grid_points - 1;
    let mut grid: Vec<f64> = (0..=steps)
        .map(|i| (lo + (hi - lo) * i as f64 / steps as f64).exp())
        .collect();
    grid[0] = opts.beta_min;
    grid[steps] = opts.beta_max;
    if opts.beta_min < 1.0 && opts.beta_max > 1.0 && !grid.contains(&1.0) {
        grid.push(1.0);
        grid.sort_by(f64::total_cmp);
    }

    let values: Vec<Option<f64>> = grid.iter().map(|&b| f(b)).collect();
    let mut evaluations = grid.len();
    let (best_i, best_v) = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .max_by(|a, b| a.1.total_cmp(&b.1))?;

    let mut a = grid[best_i.saturating_sub(1)];
    let mut b = grid[(best_i + 1).min(grid.len() - 1)];
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let eval = |x: f64| f(x).unwrap_or(f64::NEG_INFINITY);
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let mut f1 = eval(x1);
    let mut f2 = eval(x2);
    evaluations += 2;
    let mut converged = false;
    for _ in 0..200 {
        if (b - a).abs() <= opts.beta_tol {
            converged = true;
            break;
        }
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = eval(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = eval(x2);
        }
        evaluations += 1;
    }
    let (refined, refined_v) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    let beta = if refined_v >= best_v {
        refined
    } else {
        grid[best_i]
    };
    Some(ProfileMax {
        beta,
        evaluations,
        converged,
    })
}

/// Log-likelihood of `inc` under `model` with `params`; `-inf` when a gamma
/// model meets a non-positive increment.
pub fn loglik(model: &CandidateModel, params: &ModelParams, inc: &IncrementSeries) -> Result<f64> {
    let kind = ProcessKind::of(model);
    if params.kind() != kind {
        return Err(Error::Contract(format!(
            "model {} is {kind} but parameters are {}",
            model.id,
            params.kind()
        )));
    }
    loglik_params(params, inc)
}

/// As [`loglik`], keyed by the parameter record alone.
pub fn loglik_params(params: &ModelParams, inc: &IncrementSeries) -> Result<f64> {
    params.validate()?;
    let ll = match *params {
        ModelParams::LinearWiener { m, s } => wiener_sum(inc, m, s, 1.0),
        ModelParams::NonlinearWiener { m, s, beta } => wiener_sum(inc, m, s, beta),
        ModelParams::HomogGamma { alpha, theta } => gamma_sum(inc, alpha, theta, 1.0),
        ModelParams::NonHomogGamma { alpha, theta, beta } => gamma_sum(inc, alpha, theta, beta),
    };
    Ok(ll)
}

fn wiener_sum(inc: &IncrementSeries, m: f64, s: f64, beta: f64) -> f64 {
    let var = s * s;
    let norm = -0.5 * (2.0 * PI * var).ln();
    inc.deltas
        .iter()
        .zip(&inc.step_indices)
        .map(|(&x, &j)| norm - (x - m * d_j(j, beta)).powi(2) / (2.0 * var))
        .sum()
}

fn gamma_sum(inc: &IncrementSeries, alpha: f64, theta: f64, beta: f64) -> f64 {
    if inc.deltas.iter().any(|&x| !(x > 0.0)) {
        return f64::NEG_INFINITY;
    }
    let d = inc.time_scale(beta);
    gamma_loglik_scaled(&inc.deltas, &d, alpha, theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_space::case2_set;
    use crate::sim::{generate, SimParams};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{Continuous, Gamma as GammaDist, Normal as NormalDist};

    fn simulated(kind: ProcessKind, n: usize, seed: u64) -> IncrementSeries {
        let params = SimParams {
            failure_threshold: f64::INFINITY,
            max_steps: n,
            ..SimParams::default_for(kind, seed)
        };
        increments(&generate(&params, "fit").unwrap().trajectory).unwrap()
    }

    #[test]
    fn increments_examples() {
        let t = Trajectory::from_values("a", vec![0.0, 1.0, 3.0]).unwrap();
        let inc = increments(&t).unwrap();
        assert_eq!(inc.deltas, vec![1.0, 2.0]);
        assert_eq!(inc.step_indices, vec![1, 2]);
        let flat = Trajectory::from_values("b", vec![0.0, 0.0, 0.0]).unwrap();
        assert_eq!(increments(&flat).unwrap().deltas, vec![0.0, 0.0]);
        let single = Trajectory {
            unit_id: "c".into(),
            true_model_id: None,
            times: vec![0.0],
            values: vec![0.0],
        };
        assert!(increments(&single).is_err());
    }

    #[test]
    fn linear_wiener_hand_computed() {
        let fit =
            fit_linear_wiener(&IncrementSeries::from_deltas(vec![0.0, 2.0, 0.0, 2.0])).unwrap();
        match fit.params {
            ModelParams::LinearWiener { m, s } => {
                assert_relative_eq!(m, 1.0);
                assert_relative_eq!(s, 1.0);
            }
            _ => unreachable!(),
        }
        assert!(matches!(
            fit_linear_wiener(&IncrementSeries::from_deltas(vec![1.0; 4])),
            Err(Error::DegenerateVariance(_))
        ));
        assert!(matches!(
            fit_linear_wiener(&IncrementSeries::from_deltas(vec![1.0, 2.0])),
            Err(Error::TooFewIncrements { .. })
        ));
    }

    #[test]
    fn linear_wiener_recovers_parameters() {
        let fit = fit_linear_wiener(&simulated(ProcessKind::LinearWiener, 10_000, 5)).unwrap();
        let ModelParams::LinearWiener { m, s } = fit.params else {
            unreachable!()
        };
        assert!((m - 0.5).abs() < 0.012, "m {m}");
        assert!((s - 0.4).abs() < 0.01, "s {s}");
    }

    #[test]
    fn nonlinear_wiener_noise_free_identifies_beta() {
        let deltas: Vec<f64> = (1..=40).map(|j| d_j(j, 2.0)).collect();
        let opts = FitOptions {
            clamp_variance: true,
            ..FitOptions::default()
        };
        let fit = fit_nonlinear_wiener_with(&IncrementSeries::from_deltas(deltas), &opts).unwrap();
        let ModelParams::NonlinearWiener { m, beta, .. } = fit.params else {
            unreachable!()
        };
        assert!((beta - 2.0).abs() < 1e-4, "beta {beta}");
        assert!((m - 1.0).abs() < 1e-3, "m {m}");
    }

    #[test]
    fn nonlinear_wiener_nests_linear_on_linear_data() {
        let inc = simulated(ProcessKind::LinearWiener, 300, 11);
        let lin = fit_linear_wiener(&inc).unwrap();
        let nl = fit_nonlinear_wiener(&inc).unwrap();
        assert!(nl.loglik >= lin.loglik - 1e-6);
        let ModelParams::NonlinearWiener { beta, .. } = nl.params else {
            unreachable!()
        };
        assert!((beta - 1.0).abs() < 0.15, "beta {beta}");
    }

    #[test]
    fn nonlinear_wiener_recovers_beta() {
        let fit =
            fit_nonlinear_wiener(&simulated(ProcessKind::NonlinearWiener, 5_000, 21)).unwrap();
        let ModelParams::NonlinearWiener { beta, .. } = fit.params else {
            unreachable!()
        };
        assert!((beta - 1.5).abs() < 0.1, "beta {beta}");
        assert_eq!(fit.k, 3);
    }

    #[test]
    fn gamma_rejects_non_positive_increments() {
        let inc = IncrementSeries::from_deltas(vec![0.5, -0.1, 0.3, 0.2]);
        assert!(matches!(
            fit_homog_gamma(&inc),
            Err(Error::NonPositiveIncrement { step: 2, .. })
        ));
        assert!(matches!(
            fit_nonhomog_gamma(&inc),
            Err(Error::NonPositiveIncrement { .. })
        ));
        let zero = IncrementSeries::from_deltas(vec![0.5, 0.0, 0.3, 0.2]);
        assert!(fit_homog_gamma(&zero).is_err());
    }

    #[test]
    fn gamma_zero_dispersion_clamps_shape() {
        let fit = fit_homog_gamma(&IncrementSeries::from_deltas(vec![0.7; 6])).unwrap();
        let ModelParams::HomogGamma { alpha, .. } = fit.params else {
            unreachable!()
        };
        assert_eq!(alpha, SHAPE_MAX);
        assert!(!fit.converged);
        assert!(fit.loglik.is_finite());
    }

    #[test]
    fn homog_gamma_recovers_shape() {
        let fit = fit_homog_gamma(&simulated(ProcessKind::HomogGamma, 10_000, 8)).unwrap();
        let ModelParams::HomogGamma { alpha, .. } = fit.params else {
            unreachable!()
        };
        assert!((alpha - 0.5).abs() < 0.025, "alpha {alpha}");
        assert!(fit.converged);
    }

    #[test]
    fn nonhomog_gamma_nests_homog_on_homog_data() {
        let inc = simulated(ProcessKind::HomogGamma, 400, 3);
        let h = fit_homog_gamma(&inc).unwrap();
        let nh = fit_nonhomog_gamma(&inc).unwrap();
        assert!(nh.loglik >= h.loglik - 1e-6, "{} < {}", nh.loglik, h.loglik);
    }

    #[test]
    fn nonhomog_gamma_recovers_beta() {
        let fit = fit_nonhomog_gamma(&simulated(ProcessKind::NonHomogGamma, 5_000, 4)).unwrap();
        let ModelParams::NonHomogGamma { beta, .. } = fit.params else {
            unreachable!()
        };
        assert!((beta - 1.5).abs() < 0.15, "beta {beta}");
    }

    #[test]
    fn loglik_examples() {
        let set = case2_set();
        let lw = set.get("LinearWiener").unwrap();
        let params = ModelParams::LinearWiener { m: 0.3, s: 0.7 };
        let ll = loglik(lw, &params, &IncrementSeries::from_deltas(vec![0.3])).unwrap();
        assert_relative_eq!(ll, -0.5 * (2.0 * PI * 0.49).ln(), epsilon = 1e-12);

        let hg = set.get("HomogGamma").unwrap();
        let gp = ModelParams::HomogGamma {
            alpha: 1.0,
            theta: 1.0,
        };
        let ll = loglik(hg, &gp, &IncrementSeries::from_deltas(vec![-0.2, 1.0])).unwrap();
        assert_eq!(ll, f64::NEG_INFINITY);

        assert!(matches!(
            loglik(hg, &params, &IncrementSeries::from_deltas(vec![1.0])),
            Err(Error::Contract(_))
        ));
    }

    /// Reference density sums via statrs distributions.
    fn reference_loglik(params: &ModelParams, inc: &IncrementSeries) -> f64 {
        let d = |j: usize, beta: f64| (j as f64).powf(beta) - ((j - 1) as f64).powf(beta);
        inc.deltas
            .iter()
            .zip(&inc.step_indices)
            .map(|(&x, &j)| match *params {
                ModelParams::LinearWiener { m, s } => NormalDist::new(m, s).unwrap().ln_pdf(x),
                ModelParams::NonlinearWiener { m, s, beta } => {
                    NormalDist::new(m * d(j, beta), s).unwrap().ln_pdf(x)
                }
                ModelParams::HomogGamma { alpha, theta } => {
                    GammaDist::new(alpha, 1.0 / theta).unwrap().ln_pdf(x)
                }
                ModelParams::NonHomogGamma { alpha, theta, beta } => {
                    GammaDist::new(alpha * d(j, beta), 1.0 / theta)
                        .unwrap()
                        .ln_pdf(x)
                }
            })
            .sum()
    }

    #[test]
    fn loglik_matches_reference_on_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for trial in 0..100 {
            let n = rng.random_range(1..30);
            let deltas: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..3.0)).collect();
            let inc = IncrementSeries::from_deltas(deltas);
            let beta = rng.random_range(0.3..2.5);
            let params = match trial % 4 {
                0 => ModelParams::LinearWiener {
                    m: rng.random_range(-1.0..1.0),
                    s: rng.random_range(0.1..2.0),
                },
                1 => ModelParams::NonlinearWiener {
                    m: rng.random_range(-1.0..1.0),
                    s: rng.random_range(0.1..2.0),
                    beta,
                },
                2 => ModelParams::HomogGamma {
                    alpha: rng.random_range(0.2..5.0),
                    theta: rng.random_range(0.2..3.0),
                },
                _ => ModelParams::NonHomogGamma {
                    alpha: rng.random_range(0.2..5.0),
                    theta: rng.random_range(0.2..3.0),
                    beta,
                },
            };
            let ours = loglik_params(&params, &inc).unwrap();
            let reference = reference_loglik(&params, &inc);
            assert!(
                (ours - reference).abs() <= 1e-9 * reference.abs().max(1.0),
                "{params:?}: {ours} vs {reference}"
            );
        }
    }

    #[test]
    fn fitted_loglik_is_reproducible_by_evaluation() {
        let set = case2_set();
        for kind in ProcessKind::ALL {
            let inc = simulated(kind, 200, 31);
            let fit = fit_kind(kind, &inc, &FitOptions::default()).unwrap();
            let model = set.get(kind.model_id()).unwrap();
            let re = loglik(model, &fit.params, &inc).unwrap();
            assert!(
                (re - fit.loglik).abs() <= 1e-9 * fit.loglik.abs().max(1.0),
                "{kind}: {re} vs {}",
                fit.loglik
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn nested_fits_dominate(seed in 0u64..10_000, n in 8usize..80, wiener in any::<bool>()) {
            if wiener {
                let inc = simulated(ProcessKind::LinearWiener, n, seed);
                let a = fit_linear_wiener(&inc).unwrap();
                let b = fit_nonlinear_wiener(&inc).unwrap();
                prop_assert!(b.loglik >= a.loglik - 1e-6);
            } else {
                let inc = simulated(ProcessKind::HomogGamma, n, seed);
                if let (Ok(a), Ok(b)) = (fit_homog_gamma(&inc), fit_nonhomog_gamma(&inc)) {
                    prop_assert!(b.loglik >= a.loglik - 1e-6, "{} < {}", b.loglik, a.loglik);
                }
            }
        }
    }
}
