//! Beampattern-fit synthesis of MTSFM waveform sets.
//!
//! Each trial minimizes
//!
//! ```text
//! F(α) = ∫ |P_d(u) − a(u)ᴴ R(α) a(u)|² du
//! ```
//!
//! over the `M × K` modulation indices, subject to every waveform keeping its
//! squared RMS bandwidth within `(1 ± δ)` of its starting value. Trials start
//! from a common base row replicated across the array and perturbed with
//! i.i.d. Gaussian noise, which is close to a phased array; the solver then
//! decorrelates the waveforms.
//!
//! # Constraint handling
//!
//! With `y_k = k·α_k` the squared RMS bandwidth of a row is `c·‖y‖²` with
//! `c = (2π/T)²/2`, so each row's feasible set is a spherical shell in `y`.
//! Rows are parametrized as `y = ρ(s)·v/‖v‖` with
//! `ρ(s)² = β²₀(1 + δ sin s)/c`, which maps every `(v, s)` onto the shell. The
//! quasi-Newton solver then runs unconstrained on `(v, s)`: every iterate is
//! feasible and the recorded objective never increases.

mod lbfgs;

pub use lbfgs::StopReason;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::gbf::{default_quadrature_points, PhasorGram};
use crate::mimo::{
    beampattern, correlation_matrix_gbf, desired_beampattern, lag_sums, pslr, AngleGrid,
    BeampatternTemplate,
};
use crate::waveform::{rms_bandwidth_sq, swept_bandwidth, ModulationIndexSet};

/// Stopping rules for a single trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub max_iterations: usize,
    /// Relative change in the objective between accepted iterates.
    pub objective_tolerance: f64,
    /// Norm of the gradient in the solver's coordinates.
    pub gradient_tolerance: f64,
    /// Largest RMS-bandwidth residual, in (rad/s)², accepted at exit.
    pub constraint_tolerance: f64,
    /// Relative step length.
    pub step_tolerance: f64,
    /// Curvature pairs kept by the quasi-Newton update.
    pub memory: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            objective_tolerance: 1e-8,
            gradient_tolerance: 1e-6,
            constraint_tolerance: 1e-6,
            step_tolerance: 1e-12,
            memory: 10,
        }
    }
}

/// Every parameter of a synthesis campaign. The defaults describe a
/// ten-element array with sixteen harmonics per waveform, `TΔf = 64`,
/// `δ = 0.1` and 100 trials fitting a flat-top beam over `|u| ≤ 0.3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    /// Array elements / waveforms `M`.
    pub waveforms: usize,
    /// Harmonics per waveform `K`.
    pub harmonics: usize,
    /// Pulse length `T` in seconds.
    pub duration: f64,
    /// Time-bandwidth product `TΔf` of the base row.
    pub target_time_bandwidth: f64,
    /// Relative RMS-bandwidth tolerance `δ`.
    pub delta: f64,
    pub trials: usize,
    pub rng_seed: u64,
    /// Variance of the Gaussian perturbation added to every index.
    pub perturbation_variance: f64,
    /// Draw the base row's signs per trial instead of once per campaign.
    pub redraw_base_row: bool,
    /// Uniform sine-angle grid size on `[−1, 1]`.
    pub grid_points: usize,
    pub passband_halfwidth: f64,
    pub pslr_guard: f64,
    pub solver: SolverSettings,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            waveforms: 10,
            harmonics: 16,
            duration: 1.0,
            target_time_bandwidth: 64.0,
            delta: 0.1,
            trials: 100,
            rng_seed: 1,
            perturbation_variance: 0.01,
            redraw_base_row: false,
            grid_points: crate::mimo::DEFAULT_GRID_POINTS,
            passband_halfwidth: 0.3,
            pslr_guard: crate::mimo::DEFAULT_PSLR_GUARD,
            solver: SolverSettings::default(),
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.waveforms == 0 || self.harmonics == 0 {
            return invalid("waveforms and harmonics must be positive");
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return invalid("duration must be positive");
        }
        if !(self.target_time_bandwidth.is_finite() && self.target_time_bandwidth >= 0.0) {
            return invalid("target_time_bandwidth must be non-negative");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return invalid("delta must lie in (0, 1)");
        }
        if self.trials == 0 {
            return invalid("trials must be at least 1");
        }
        if !(self.perturbation_variance.is_finite() && self.perturbation_variance >= 0.0) {
            return invalid("perturbation_variance must be non-negative");
        }
        if self.grid_points < 3 {
            return invalid("grid_points must be at least 3");
        }
        if !(self.passband_halfwidth > 0.0 && self.passband_halfwidth <= 1.0) {
            return invalid("passband_halfwidth must lie in (0, 1]");
        }
        if !(self.pslr_guard.is_finite() && self.pslr_guard >= 0.0) {
            return invalid("pslr_guard must be non-negative");
        }
        let s = &self.solver;
        let tolerances = [
            s.objective_tolerance,
            s.gradient_tolerance,
            s.constraint_tolerance,
            s.step_tolerance,
        ];
        if tolerances.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return invalid("solver tolerances must be positive");
        }
        if s.max_iterations == 0 || s.memory == 0 {
            return invalid("solver max_iterations and memory must be positive");
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<AngleGrid> {
        AngleGrid::uniform(self.grid_points)
    }

    /// The flat-top template over `|u| ≤ passband_halfwidth`.
    pub fn template(&self) -> Result<BeampatternTemplate> {
        desired_beampattern(self.passband_halfwidth, self.waveforms, &self.grid()?)
    }
}

/// Outcome of one optimized trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial_index: usize,
    pub trial_seed: u64,
    pub initial_indices: ModulationIndexSet,
    pub final_indices: ModulationIndexSet,
    /// Objective at the start point and after every accepted step.
    pub objective_trace: Vec<f64>,
    pub final_objective: f64,
    pub pslr_db: f64,
    /// Per-waveform RMS-bandwidth band violation in (rad/s)²; zero when feasible.
    pub constraint_residuals: Vec<f64>,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub iterations: usize,
    pub gradient_norm: f64,
}

/// A trial that raised an error instead of finishing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial_index: usize,
    pub trial_seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub trials_requested: usize,
    pub succeeded: usize,
    pub converged: usize,
    pub failed: usize,
    pub median_pslr_db: f64,
    pub min_pslr_db: f64,
    pub max_pslr_db: f64,
    /// Trial with the lowest PSLR.
    pub best_trial: usize,
}

impl CampaignSummary {
    /// Statistics over finished trials; `None` when there are none.
    pub fn from_trials(trials: &[TrialResult], requested: usize, failed: usize) -> Option<Self> {
        let mut values: Vec<f64> = trials.iter().map(|t| t.pslr_db).collect();
        if values.is_empty() {
            return None;
        }
        values.sort_by(f64::total_cmp);
        let n = values.len();
        let median = if n % 2 == 1 {
            values[n / 2]
        } else {
            0.5 * (values[n / 2 - 1] + values[n / 2])
        };
        let best = trials
            .iter()
            .min_by(|a, b| a.pslr_db.total_cmp(&b.pslr_db))
            .map(|t| t.trial_index)?;
        Some(Self {
            trials_requested: requested,
            succeeded: n,
            converged: trials.iter().filter(|t| t.converged).count(),
            failed,
            median_pslr_db: median,
            min_pslr_db: values[0],
            max_pslr_db: values[n - 1],
            best_trial: best,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Campaign {
    pub trials: Vec<TrialResult>,
    pub failures: Vec<TrialFailure>,
    pub summary: CampaignSummary,
}

/// Beampattern fit on a fixed grid, evaluated through the cosine expansion of
/// a real symmetric correlation matrix.
struct BeampatternFit {
    waveforms: usize,
    target: Vec<f64>,
    weights: Vec<f64>,
    /// `cos(πdu_i)`, lag-major.
    cosines: Vec<f64>,
}

impl BeampatternFit {
    fn new(template: &BeampatternTemplate, waveforms: usize) -> Self {
        let grid = template.grid();
        let n = grid.len();
        let mut cosines = vec![0.0; waveforms * n];
        for d in 0..waveforms {
            for (i, u) in grid.values().iter().enumerate() {
                cosines[d * n + i] = (PI * d as f64 * u).cos();
            }
        }
        Self {
            waveforms,
            target: template.values().to_vec(),
            weights: grid.trapezoid_weights(),
            cosines,
        }
    }

    /// Objective and its derivative with respect to each lag sum `c_d`.
    fn evaluate(&self, r: &[f64]) -> (f64, Vec<f64>) {
        let c = lag_sums(r, self.waveforms);
        let n = self.target.len();
        let mut residual = self.target.clone();
        for (d, cd) in c.iter().enumerate() {
            let cos = &self.cosines[d * n..(d + 1) * n];
            residual.iter_mut().zip(cos).for_each(|(e, x)| *e -= cd * x);
        }
        let value = residual
            .iter()
            .zip(&self.weights)
            .map(|(e, w)| w * e * e)
            .sum();
        let lag_grad = (0..self.waveforms)
            .map(|d| {
                let cos = &self.cosines[d * n..(d + 1) * n];
                -2.0 * residual
                    .iter()
                    .zip(&self.weights)
                    .zip(cos)
                    .map(|((e, w), x)| e * w * x)
                    .sum::<f64>()
            })
            .collect();
        (value, lag_grad)
    }

    /// Pair weights `∂F/∂R_{a,b}` for `a ≠ b`, scaled by `1/M` so they apply
    /// directly to `J_0`.
    fn pair_weights(&self, lag_grad: &[f64]) -> Vec<f64> {
        let m = self.waveforms;
        let mut w = vec![0.0; m * m];
        for a in 0..m {
            for b in 0..m {
                if a != b {
                    w[a * m + b] = 2.0 * lag_grad[a.abs_diff(b)] / m as f64;
                }
            }
        }
        w
    }
}

/// Objective, correlation matrix and index gradient for one index matrix.
struct Evaluator {
    fit: BeampatternFit,
    gram: Option<PhasorGram>,
    harmonics: usize,
}

impl Evaluator {
    fn new(template: &BeampatternTemplate, waveforms: usize, harmonics: usize) -> Self {
        Self {
            fit: BeampatternFit::new(template, waveforms),
            gram: None,
            harmonics,
        }
    }

    fn evaluate(&mut self, alpha: &[f64], gradient: Option<&mut [f64]>) -> Result<f64> {
        let m = self.fit.waveforms;
        let spread = max_pairwise_difference(alpha, m, self.harmonics);
        if !spread.is_finite() {
            return Err(Error::NumericalFailure("modulation indices diverged".into()));
        }
        let points = default_quadrature_points(self.harmonics, spread);
        let gram = match &mut self.gram {
            Some(g) => {
                g.update(alpha, points)?;
                g
            }
            None => self.gram.insert(PhasorGram::new(alpha, self.harmonics, points)?),
        };
        let scale = 1.0 / m as f64;
        let r: Vec<f64> = gram.j0_matrix().into_iter().map(|v| v * scale).collect();
        let (value, lag_grad) = self.fit.evaluate(&r);
        if let Some(out) = gradient {
            let g = gram.weighted_gradient(&self.fit.pair_weights(&lag_grad));
            out.copy_from_slice(&g);
        }
        Ok(value)
    }
}

fn max_pairwise_difference(alpha: &[f64], rows: usize, harmonics: usize) -> f64 {
    (0..harmonics)
        .map(|k| {
            let col = (0..rows).map(|m| alpha[m * harmonics + k]);
            let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
            hi - lo
        })
        .fold(0.0, f64::max)
}

fn check_grid(idx: &ModulationIndexSet, template: &BeampatternTemplate) -> Result<()> {
    if template.grid().len() < 2 {
        return invalid("template grid is empty");
    }
    if idx.waveforms() == 0 {
        return invalid("index set is empty");
    }
    Ok(())
}

/// Trapezoid-rule beampattern misfit `∫ |P_d(u) − a(u)ᴴ R a(u)|² du` with `R`
/// from [`correlation_matrix_gbf`].
pub fn objective(idx: &ModulationIndexSet, template: &BeampatternTemplate) -> Result<f64> {
    check_grid(idx, template)?;
    let r = correlation_matrix_gbf(idx)?;
    let fit = BeampatternFit::new(template, idx.waveforms());
    Ok(fit.evaluate(r.as_slice()).0)
}

/// `∂F/∂α_{m,k}` as a row-major `M × K` matrix.
pub fn objective_gradient(idx: &ModulationIndexSet, template: &BeampatternTemplate) -> Result<Vec<f64>> {
    check_grid(idx, template)?;
    let mut ev = Evaluator::new(template, idx.waveforms(), idx.harmonics());
    let mut g = vec![0.0; idx.as_slice().len()];
    ev.evaluate(idx.as_slice(), Some(&mut g))?;
    Ok(g)
}

/// Per-waveform violation of the band `(1−δ)β²₀ ≤ β² ≤ (1+δ)β²₀`.
pub fn rms_constraint(
    idx: &ModulationIndexSet,
    initial: &ModulationIndexSet,
    delta: f64,
) -> Result<Vec<f64>> {
    if idx.waveforms() != initial.waveforms() || idx.harmonics() != initial.harmonics() {
        return invalid("index sets have different shapes");
    }
    let t = idx.duration();
    Ok(idx
        .rows()
        .zip(initial.rows())
        .map(|(row, row0)| {
            let b = rms_bandwidth_sq(row, t);
            let b0 = rms_bandwidth_sq(row0, initial.duration());
            (b - (1.0 + delta) * b0).max((1.0 - delta) * b0 - b).max(0.0)
        })
        .collect())
}

/// Seed of a trial's private random stream, derived from the campaign seed.
pub fn trial_seed(rng_seed: u64, trial_index: usize) -> u64 {
    splitmix64(rng_seed ^ splitmix64(trial_index as u64 ^ 0xA076_1D64_78BD_642F))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Base index row with `|α_k| ∝ 1/k` and signs drawn from the campaign seed,
/// scaled so `T·Δf` hits the target. Every trial of a campaign shares it.
pub fn base_row(config: &SynthesisConfig) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(config.rng_seed ^ BASE_ROW_STREAM));
    signed_base_row(config, &mut rng)
}

const BASE_ROW_STREAM: u64 = 0x5851_F42D_4C95_7F2D;

fn signed_base_row(config: &SynthesisConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let profile: Vec<f64> = (1..=config.harmonics)
        .map(|k| {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            sign / k as f64
        })
        .collect();
    scale_to_time_bandwidth(profile, config)
}

fn scale_to_time_bandwidth(profile: Vec<f64>, config: &SynthesisConfig) -> Vec<f64> {
    let swept = swept_bandwidth(&profile, config.duration) * config.duration;
    if swept == 0.0 || config.target_time_bandwidth == 0.0 {
        return vec![0.0; profile.len()];
    }
    let scale = config.target_time_bandwidth / swept;
    profile.into_iter().map(|a| a * scale).collect()
}

/// Starting index set for a trial: the base row on every element plus
/// i.i.d. `N(0, σ²)` perturbations drawn from the trial's own stream.
pub fn initialize_trial(config: &SynthesisConfig, trial_index: usize) -> Result<ModulationIndexSet> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(config.rng_seed, trial_index));
    let base = if config.redraw_base_row {
        signed_base_row(config, &mut rng)
    } else {
        base_row(config)
    };
    let noise = Normal::new(0.0, config.perturbation_variance.sqrt())
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut alpha = Vec::with_capacity(config.waveforms * config.harmonics);
    for _ in 0..config.waveforms {
        for &b in &base {
            let p = if config.perturbation_variance > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            alpha.push(b + p);
        }
    }
    ModulationIndexSet::new(alpha, config.waveforms, config.harmonics, config.duration)
}

/// Maps unconstrained solver coordinates onto the per-row RMS-bandwidth shells.
struct ShellMap {
    waveforms: usize,
    harmonics: usize,
    delta: f64,
    /// Starting squared RMS bandwidth of each row.
    centers: Vec<f64>,
    /// `(2π/T)²/2`
    scale: f64,
}

impl ShellMap {
    fn new(initial: &ModulationIndexSet, delta: f64) -> Self {
        let t = initial.duration();
        Self {
            waveforms: initial.waveforms(),
            harmonics: initial.harmonics(),
            delta,
            centers: initial.rows().map(|r| rms_bandwidth_sq(r, t)).collect(),
            scale: 0.5 * (2.0 * PI / t).powi(2),
        }
    }

    fn dims(&self) -> usize {
        self.waveforms * (self.harmonics + 1)
    }

    fn encode(&self, idx: &ModulationIndexSet) -> Vec<f64> {
        let mut x: Vec<f64> = idx
            .as_slice()
            .iter()
            .enumerate()
            .map(|(i, a)| a * ((i % self.harmonics) + 1) as f64)
            .collect();
        x.extend(std::iter::repeat_n(0.0, self.waveforms));
        x
    }

    fn radius(&self, m: usize, s: f64) -> (f64, f64) {
        let c = self.centers[m];
        if c == 0.0 {
            return (0.0, 0.0);
        }
        let rho = (c * (1.0 + self.delta * s.sin()) / self.scale).sqrt();
        (rho, c * self.delta * s.cos() / (2.0 * self.scale * rho))
    }

    fn direction<'a>(&self, x: &'a [f64], m: usize) -> (&'a [f64], f64) {
        let k = self.harmonics;
        let v = &x[m * k..(m + 1) * k];
        (v, v.iter().map(|a| a * a).sum::<f64>().sqrt())
    }

    fn decode(&self, x: &[f64], alpha: &mut [f64]) {
        let k = self.harmonics;
        let shells = &x[self.waveforms * k..];
        for m in 0..self.waveforms {
            let (v, nv) = self.direction(x, m);
            let (rho, _) = self.radius(m, shells[m]);
            for j in 0..k {
                alpha[m * k + j] = if nv > 0.0 {
                    rho * v[j] / nv / (j + 1) as f64
                } else {
                    0.0
                };
            }
        }
    }

    fn pullback(&self, x: &[f64], grad_alpha: &[f64], grad_x: &mut [f64]) {
        let k = self.harmonics;
        let shells = &x[self.waveforms * k..];
        for m in 0..self.waveforms {
            let (v, nv) = self.direction(x, m);
            let (rho, drho) = self.radius(m, shells[m]);
            let out = &mut grad_x[m * k..(m + 1) * k];
            if nv == 0.0 {
                out.iter_mut().for_each(|g| *g = 0.0);
                grad_x[self.waveforms * k + m] = 0.0;
                continue;
            }
            let gy: Vec<f64> = (0..k)
                .map(|j| grad_alpha[m * k + j] / (j + 1) as f64)
                .collect();
            let radial: f64 = gy.iter().zip(v).map(|(g, vj)| g * vj).sum::<f64>() / nv;
            for j in 0..k {
                out[j] = rho / nv * (gy[j] - radial * v[j] / nv);
            }
            grad_x[self.waveforms * k + m] = radial * drho;
        }
    }
}

/// Locally optimizes one trial from `initial`.
pub fn optimize_trial(
    config: &SynthesisConfig,
    initial: &ModulationIndexSet,
    template: &BeampatternTemplate,
) -> Result<TrialResult> {
    optimize_seeded_trial(config, initial, template, 0, 0)
}

fn optimize_seeded_trial(
    config: &SynthesisConfig,
    initial: &ModulationIndexSet,
    template: &BeampatternTemplate,
    trial_index: usize,
    seed: u64,
) -> Result<TrialResult> {
    config.validate()?;
    check_grid(initial, template)?;
    let (m, k) = (initial.waveforms(), initial.harmonics());
    let shell = ShellMap::new(initial, config.delta);
    let mut evaluator = Evaluator::new(template, m, k);
    let mut alpha = vec![0.0; m * k];
    let mut grad_alpha = vec![0.0; m * k];
    let settings = lbfgs::LbfgsSettings {
        max_iterations: config.solver.max_iterations,
        memory: config.solver.memory,
        objective_tolerance: config.solver.objective_tolerance,
        gradient_tolerance: config.solver.gradient_tolerance,
        step_tolerance: config.solver.step_tolerance,
    };
    let x0 = shell.encode(initial);
    debug_assert_eq!(x0.len(), shell.dims());
    let outcome = lbfgs::minimize(
        |x, g| {
            shell.decode(x, &mut alpha);
            let f = evaluator.evaluate(&alpha, Some(&mut grad_alpha))?;
            shell.pullback(x, &grad_alpha, g);
            Ok(f)
        },
        x0,
        &settings,
    )?;
    shell.decode(&outcome.x, &mut alpha);
    let final_indices = ModulationIndexSet::new(alpha, m, k, initial.duration())?;
    let residuals = rms_constraint(&final_indices, initial, config.delta)?;
    let feasible = residuals
        .iter()
        .all(|r| *r <= config.solver.constraint_tolerance);
    let r = correlation_matrix_gbf(&final_indices)?;
    let pattern = beampattern(&r, template.grid())?;
    let pslr_db = pslr(&pattern, template, config.pslr_guard)?;
    let final_objective = *outcome.trace.last().expect("trace holds the start point");
    Ok(TrialResult {
        trial_index,
        trial_seed: seed,
        initial_indices: initial.clone(),
        final_indices,
        objective_trace: outcome.trace,
        final_objective,
        pslr_db,
        constraint_residuals: residuals,
        converged: outcome.reason.is_converged() && feasible,
        stop_reason: outcome.reason,
        iterations: outcome.iterations,
        gradient_norm: outcome.gradient_norm,
    })
}

/// Initializes and optimizes trial `trial_index` of the campaign.
pub fn run_trial(
    config: &SynthesisConfig,
    template: &BeampatternTemplate,
    trial_index: usize,
) -> Result<TrialResult> {
    let initial = initialize_trial(config, trial_index)?;
    let seed = trial_seed(config.rng_seed, trial_index);
    optimize_seeded_trial(config, &initial, template, trial_index, seed)
}

/// Runs every trial on the current rayon pool and aggregates PSLR statistics.
/// Trial results do not depend on the pool size.
pub fn run_campaign(config: &SynthesisConfig, template: &BeampatternTemplate) -> Result<Campaign> {
    config.validate()?;
    let outcomes: Vec<(usize, Result<TrialResult>)> = (0..config.trials)
        .into_par_iter()
        .map(|i| (i, run_trial(config, template, i)))
        .collect();
    let mut trials = Vec::new();
    let mut failures = Vec::new();
    for (i, outcome) in outcomes {
        match outcome {
            Ok(t) => trials.push(t),
            Err(e) => failures.push(TrialFailure {
                trial_index: i,
                trial_seed: trial_seed(config.rng_seed, i),
                error: e.to_string(),
            }),
        }
    }
    let summary = CampaignSummary::from_trials(&trials, config.trials, failures.len())
        .ok_or_else(|| {
            Error::CampaignFailed(format!(
                "all {} trials failed; first error: {}",
                config.trials,
                failures.first().map_or("none", |f| f.error.as_str())
            ))
        })?;
    Ok(Campaign {
        trials,
        failures,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> SynthesisConfig {
        SynthesisConfig {
            waveforms: 3,
            harmonics: 4,
            target_time_bandwidth: 8.0,
            trials: 2,
            grid_points: 201,
            ..Default::default()
        }
    }

    #[test]
    fn default_config_is_valid() {
        SynthesisConfig::default().validate().unwrap();
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = [
            SynthesisConfig {
                delta: 1.0,
                ..Default::default()
            },
            SynthesisConfig {
                trials: 0,
                ..Default::default()
            },
            SynthesisConfig {
                solver: SolverSettings {
                    objective_tolerance: 0.0,
                    ..Default::default()
                },
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
    }

    #[test]
    fn base_row_hits_time_bandwidth() {
        let c = SynthesisConfig::default();
        let row = base_row(&c);
        assert!((swept_bandwidth(&row, c.duration) * c.duration - 64.0).abs() < 1e-9);
        for (k, a) in row.iter().enumerate() {
            assert!((a.abs() * (k + 1) as f64 - row[0].abs()).abs() < 1e-12);
        }
        assert_eq!(row, base_row(&c));
        assert!(row.iter().any(|a| *a < 0.0) && row.iter().any(|a| *a > 0.0));
    }

    #[test]
    fn zero_variance_gives_identical_rows() {
        let c = SynthesisConfig {
            perturbation_variance: 0.0,
            ..small_config()
        };
        let idx = initialize_trial(&c, 0).unwrap();
        let r = correlation_matrix_gbf(&idx).unwrap();
        assert!(r.as_slice().iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn initialization_is_deterministic_per_trial() {
        let c = small_config();
        assert_eq!(initialize_trial(&c, 3).unwrap(), initialize_trial(&c, 3).unwrap());
        assert_ne!(initialize_trial(&c, 3).unwrap(), initialize_trial(&c, 4).unwrap());
        let other = SynthesisConfig {
            rng_seed: 99,
            ..small_config()
        };
        assert_ne!(initialize_trial(&c, 3).unwrap(), initialize_trial(&other, 3).unwrap());
    }

    #[test]
    fn redrawn_base_rows_differ_between_trials() {
        let c = SynthesisConfig {
            redraw_base_row: true,
            perturbation_variance: 0.0,
            ..small_config()
        };
        let a = initialize_trial(&c, 0).unwrap();
        let b = initialize_trial(&c, 1).unwrap();
        assert_ne!(a.row(0), b.row(0));
        assert!((swept_bandwidth(a.row(0), 1.0) - 8.0).abs() < 1e-9);
    }

    #[test]
    fn rms_constraint_examples() {
        let idx = ModulationIndexSet::from_rows(&[vec![1.0, 0.5], vec![0.3, 0.2]], 1.0).unwrap();
        assert_eq!(rms_constraint(&idx, &idx, 0.1).unwrap(), vec![0.0, 0.0]);
        // push the first row just past the upper edge of the band
        let f = (1.1f64).sqrt() + 1e-3;
        let moved = ModulationIndexSet::from_rows(&[vec![f, 0.5 * f], vec![0.3, 0.2]], 1.0).unwrap();
        let r = rms_constraint(&moved, &idx, 0.1).unwrap();
        assert!(r[0] > 0.0);
        assert_eq!(r[1], 0.0);
    }

    #[test]
    fn rms_band_arithmetic() {
        // β²₀ = 100 and β² = 95 lie inside [90, 110]
        let scale = 0.5 * (2.0 * PI).powi(2);
        let a0 = (100.0 / scale).sqrt();
        let a1 = (95.0 / scale).sqrt();
        let i0 = ModulationIndexSet::from_rows(&[vec![a0]], 1.0).unwrap();
        let i1 = ModulationIndexSet::from_rows(&[vec![a1]], 1.0).unwrap();
        assert_eq!(rms_constraint(&i1, &i0, 0.1).unwrap(), vec![0.0]);
    }

    #[test]
    fn shell_map_round_trips_and_stays_on_shell() {
        let idx = initialize_trial(&small_config(), 0).unwrap();
        let shell = ShellMap::new(&idx, 0.1);
        let x = shell.encode(&idx);
        let mut alpha = vec![0.0; idx.as_slice().len()];
        shell.decode(&x, &mut alpha);
        for (a, b) in alpha.iter().zip(idx.as_slice()) {
            assert!((a - b).abs() < 1e-13);
        }
        let mut y = x.clone();
        y.iter_mut().enumerate().for_each(|(i, v)| *v += 0.3 * (i as f64).sin());
        shell.decode(&y, &mut alpha);
        let moved = ModulationIndexSet::new(alpha, 3, 4, 1.0).unwrap();
        assert!(rms_constraint(&moved, &idx, 0.1)
            .unwrap()
            .iter()
            .all(|r| *r < 1e-9));
    }

    #[test]
    fn shell_pullback_matches_finite_differences() {
        let c = small_config();
        let idx = initialize_trial(&c, 1).unwrap();
        let template = c.template().unwrap();
        let shell = ShellMap::new(&idx, 0.1);
        let mut ev = Evaluator::new(&template, 3, 4);
        let mut x = shell.encode(&idx);
        x[12] = 0.4;
        x[14] = -0.7;
        let mut f_at = |x: &[f64]| {
            let mut a = vec![0.0; 12];
            shell.decode(x, &mut a);
            ev.evaluate(&a, None).unwrap()
        };
        let mut a = vec![0.0; 12];
        shell.decode(&x, &mut a);
        let mut ga = vec![0.0; 12];
        Evaluator::new(&template, 3, 4)
            .evaluate(&a, Some(&mut ga))
            .unwrap();
        let mut gx = vec![0.0; x.len()];
        shell.pullback(&x, &ga, &mut gx);
        let h = 1e-6;
        for i in 0..x.len() {
            let mut up = x.clone();
            let mut dn = x.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (f_at(&up) - f_at(&dn)) / (2.0 * h);
            assert!(
                (fd - gx[i]).abs() <= 1e-5 * gx[i].abs().max(1e-2),
                "coordinate {i}: {fd} vs {}",
                gx[i]
            );
        }
    }

    #[test]
    fn small_trial_descends_and_stays_feasible() {
        let c = small_config();
        let template = c.template().unwrap();
        let t = run_trial(&c, &template, 0).unwrap();
        assert!(t.final_objective < t.objective_trace[0]);
        assert!(t.objective_trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(t.constraint_residuals.iter().all(|r| *r <= 1e-6));
    }

    #[test]
    fn summary_of_single_trial() {
        let c = SynthesisConfig {
            trials: 1,
            ..small_config()
        };
        let template = c.template().unwrap();
        let camp = run_campaign(&c, &template).unwrap();
        let s = &camp.summary;
        assert_eq!(s.median_pslr_db, camp.trials[0].pslr_db);
        assert_eq!(s.min_pslr_db, s.max_pslr_db);
        assert_eq!(s.best_trial, 0);
    }

    #[test]
    fn summary_median_of_even_count() {
        let c = small_config();
        let template = c.template().unwrap();
        let mut t = run_trial(&c, &template, 0).unwrap();
        let mut trials = Vec::new();
        for (i, p) in [-9.0, -12.0, -10.0, -11.0].into_iter().enumerate() {
            t.trial_index = i;
            t.pslr_db = p;
            trials.push(t.clone());
        }
        let s = CampaignSummary::from_trials(&trials, 4, 0).unwrap();
        assert_eq!(s.median_pslr_db, -10.5);
        assert_eq!(s.best_trial, 1);
        assert!(CampaignSummary::from_trials(&[], 4, 4).is_none());
    }
}
