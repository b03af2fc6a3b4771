//! Limited-memory BFGS with a strong-Wolfe line search.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use crate::error::Result;

const ARMIJO: f64 = 1e-4;
const CURVATURE: f64 = 0.9;
const MAX_LINE_SEARCH_EVALS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LbfgsSettings {
    pub max_iterations: usize,
    pub memory: usize,
    pub objective_tolerance: f64,
    pub gradient_tolerance: f64,
    pub step_tolerance: f64,
}

/// Why the minimizer stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    ObjectiveTolerance,
    StepTolerance,
    IterationLimit,
    LineSearchFailure,
}

impl StopReason {
    pub fn is_converged(self) -> bool {
        matches!(
            self,
            StopReason::GradientTolerance | StopReason::ObjectiveTolerance | StopReason::StepTolerance
        )
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub gradient_norm: f64,
    /// Objective at the start point and after every accepted step.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub reason: StopReason,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Minimizes `f`, which writes the gradient into its second argument and
/// returns the objective value.
pub(crate) fn minimize<F>(mut f: F, x0: Vec<f64>, settings: &LbfgsSettings) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
{
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g)?;
    let mut trace = vec![fx];
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(settings.memory);
    let mut iterations = 0;

    let reason = loop {
        let gnorm = norm(&g);
        if gnorm <= settings.gradient_tolerance {
            break StopReason::GradientTolerance;
        }
        if iterations >= settings.max_iterations {
            break StopReason::IterationLimit;
        }

        let mut d = two_loop(&g, &history);
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            // curvature pairs went stale; restart from steepest descent
            history.clear();
            d = g.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
        }
        let initial_step = if history.is_empty() {
            (1.0 / gnorm).min(1.0)
        } else {
            1.0
        };

        let Some(step) = line_search(&mut f, &x, fx, slope, &d, initial_step)? else {
            if history.is_empty() {
                break StopReason::LineSearchFailure;
            }
            history.clear();
            continue;
        };
        iterations += 1;

        let s: Vec<f64> = d.iter().map(|v| v * step.alpha).collect();
        let y: Vec<f64> = step.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let previous = fx;
        x = step.x;
        fx = step.f;
        g = step.g;
        trace.push(fx);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if history.len() == settings.memory {
                history.pop_front();
            }
            history.push_back((s.clone(), y, 1.0 / sy));
        }

        if (previous - fx).abs() <= settings.objective_tolerance * previous.abs().max(1.0) {
            break StopReason::ObjectiveTolerance;
        }
        if norm(&s) <= settings.step_tolerance * norm(&x).max(1.0) {
            break StopReason::StepTolerance;
        }
    };

    Ok(LbfgsOutcome {
        gradient_norm: norm(&g),
        x,
        trace,
        iterations,
        reason,
    })
}

fn two_loop(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

struct Step {
    alpha: f64,
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
}

struct Probe {
    alpha: f64,
    f: f64,
    slope: f64,
}

/// Bracketing and zoom phases of the strong-Wolfe search. Returns `None` when
/// no step with sufficient decrease was found.
fn line_search<F>(
    f: &mut F,
    x: &[f64],
    f0: f64,
    slope0: f64,
    d: &[f64],
    initial: f64,
) -> Result<Option<Step>>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
{
    let mut evaluate = |alpha: f64| -> Result<Step> {
        let xn: Vec<f64> = x.iter().zip(d).map(|(xi, di)| xi + alpha * di).collect();
        let mut gn = vec![0.0; x.len()];
        let fn_ = f(&xn, &mut gn)?;
        Ok(Step {
            alpha,
            x: xn,
            f: fn_,
            g: gn,
        })
    };
    let sufficient = |p: &Step| p.f.is_finite() && p.f <= f0 + ARMIJO * p.alpha * slope0;

    let mut prev = Probe {
        alpha: 0.0,
        f: f0,
        slope: slope0,
    };
    let mut best: Option<Step> = None;
    let mut alpha = initial;
    let mut evals = 0;
    let (mut lo, mut hi);
    loop {
        let trial = evaluate(alpha)?;
        evals += 1;
        let slope = dot(&trial.g, d);
        if !sufficient(&trial) || (evals > 1 && trial.f >= prev.f) {
            lo = prev;
            hi = Probe {
                alpha,
                f: trial.f,
                slope,
            };
            break;
        }
        if slope.abs() <= -CURVATURE * slope0 {
            return Ok(Some(trial));
        }
        if slope >= 0.0 {
            lo = Probe {
                alpha,
                f: trial.f,
                slope,
            };
            hi = prev;
            best = Some(trial);
            break;
        }
        prev = Probe {
            alpha,
            f: trial.f,
            slope,
        };
        best = Some(trial);
        if evals >= MAX_LINE_SEARCH_EVALS {
            return Ok(best);
        }
        alpha *= 2.0;
    }

    while evals < MAX_LINE_SEARCH_EVALS {
        let alpha = interpolate(&lo, &hi);
        let trial = evaluate(alpha)?;
        evals += 1;
        let slope = dot(&trial.g, d);
        if !sufficient(&trial) || trial.f >= lo.f {
            hi = Probe {
                alpha,
                f: trial.f,
                slope,
            };
        } else {
            if slope.abs() <= -CURVATURE * slope0 {
                return Ok(Some(trial));
            }
            if slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = Probe {
                alpha,
                f: trial.f,
                slope,
            };
            best = Some(trial);
        }
        if (hi.alpha - lo.alpha).abs() <= 1e-14 * lo.alpha.abs().max(1e-300) {
            break;
        }
    }
    // fall back to the best sufficient-decrease point seen
    Ok(best.filter(|b| sufficient(b)))
}

/// Minimizer of the cubic through both probes, safeguarded into the inner 80%
/// of the interval; bisection when the cubic is degenerate.
fn interpolate(lo: &Probe, hi: &Probe) -> f64 {
    let (a, b) = (lo.alpha, hi.alpha);
    let d1 = lo.slope + hi.slope - 3.0 * (lo.f - hi.f) / (a - b);
    let disc = d1 * d1 - lo.slope * hi.slope;
    let mid = 0.5 * (a + b);
    if !(disc.is_finite() && disc >= 0.0) {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (hi.slope + d2 - d1) / (hi.slope - lo.slope + 2.0 * d2);
    let (left, right) = if a < b { (a, b) } else { (b, a) };
    let margin = 0.1 * (right - left);
    if t.is_finite() && t > left + margin && t < right - margin {
        t
    } else {
        mid
    }
}
