//! Narrowband auto-ambiguity functions.
//!
//! ```text
//! χ(τ, ν) = ∫ x(t − τ/2) x*(t + τ/2) e^{j2πνt} dt
//! ```
//!
//! Substituting `s = t − τ/2` gives `χ(τ, ν) = e^{jπντ} ∫ x(s) x*(s+τ) e^{j2πνs} ds`,
//! so each delay row is a Fourier transform of the lag product. Delays are
//! restricted to whole sample lags. A sampled waveform is treated as constant
//! over each sample cell; integrating `e^{j2πνs}` exactly over a cell
//! contributes `Δt·sinc(πνΔt)`, so the surface is the exact ambiguity function
//! of the piecewise-constant waveform. Doppler rows are evaluated on arbitrary
//! uniform grids with a chirp-z transform.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::waveform::SampledWaveform;

/// Delay samples in the default grid, spanning `[−T, T]`.
pub const DEFAULT_DELAY_POINTS: usize = 801;
/// Doppler samples in the default grid, spanning `[−2K/T, 2K/T]`.
pub const DEFAULT_DOPPLER_POINTS: usize = 401;

/// Complex ambiguity values over a delay × Doppler grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguitySurface {
    /// Delays in seconds.
    pub tau: Vec<f64>,
    /// Doppler shifts in Hz.
    pub nu: Vec<f64>,
    /// Delay-major: `values[i * nu.len() + j] = χ(tau[i], nu[j])`.
    pub values: Vec<Complex64>,
    /// Energy of the source waveform, `χ(0, 0)`.
    pub energy: f64,
    /// Index of the source waveform within its set, if known.
    pub source_waveform: Option<usize>,
}

impl AmbiguitySurface {
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.values[i * self.nu.len() + j]
    }

    pub fn delay_row(&self, i: usize) -> &[Complex64] {
        let n = self.nu.len();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn doppler_column(&self, j: usize) -> Vec<Complex64> {
        (0..self.tau.len()).map(|i| self.get(i, j)).collect()
    }
}

fn is_uniform(grid: &[f64]) -> bool {
    if grid.len() < 3 {
        return true;
    }
    let h = grid[1] - grid[0];
    h > 0.0
        && grid
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.abs())
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        x.sin() / x
    }
}

/// Symmetric uniform grid of `points` values over `[−half, half]` with an exact zero.
pub fn symmetric_grid(half: f64, points: usize) -> Vec<f64> {
    if points < 2 {
        return vec![0.0];
    }
    let step = 2.0 * half / (points - 1) as f64;
    let mid = (points - 1) as f64 / 2.0;
    (0..points).map(|i| (i as f64 - mid) * step).collect()
}

/// Doppler grid over `[−2K/T, 2K/T]` with 401 points.
pub fn default_doppler_grid(harmonics: usize, duration: f64) -> Vec<f64> {
    symmetric_grid(2.0 * harmonics as f64 / duration, DEFAULT_DOPPLER_POINTS)
}

/// Delay grid of `points` whole-sample lags over `[−T, T]`; the sample count
/// must be a multiple of `(points − 1)/2`.
pub fn delay_grid(w: &SampledWaveform, points: usize) -> Result<Vec<f64>> {
    if points < 3 || points % 2 == 0 {
        return invalid("delay grid needs an odd number of points, at least three");
    }
    let half = (points - 1) / 2;
    if w.len() % half != 0 {
        return invalid(format!(
            "{} samples cannot be split into {half} whole-sample delay steps",
            w.len()
        ));
    }
    let lag = w.len() / half;
    let dt = w.sample_period();
    Ok((0..points)
        .map(|i| (i as f64 - half as f64) * (lag as f64) * dt)
        .collect())
}

/// [`delay_grid`] with 801 points.
pub fn default_delay_grid(w: &SampledWaveform) -> Result<Vec<f64>> {
    delay_grid(w, DEFAULT_DELAY_POINTS)
}

/// Bluestein evaluation of `S_k = Σ_n a_n e^{jωkn}` for `k = 0..outputs`.
struct ChirpZ {
    omega: f64,
    inputs: usize,
    outputs: usize,
    len: usize,
    kernel: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl ChirpZ {
    fn new(inputs: usize, outputs: usize, omega: f64) -> Self {
        let len = (inputs + outputs - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);
        let chirp = |d: i64| Complex64::from_polar(1.0, -0.5 * omega * (d * d) as f64);
        let mut kernel = vec![Complex64::new(0.0, 0.0); len];
        for d in 0..outputs {
            kernel[d] = chirp(d as i64);
        }
        for d in 1..inputs {
            kernel[len - d] = chirp(-(d as i64));
        }
        forward.process(&mut kernel);
        Self {
            omega,
            inputs,
            outputs,
            len,
            kernel,
            forward,
            inverse,
        }
    }

    fn transform(&self, a: &[Complex64]) -> Vec<Complex64> {
        debug_assert!(a.len() <= self.inputs);
        let mut buf = vec![Complex64::new(0.0, 0.0); self.len];
        for (n, v) in a.iter().enumerate() {
            buf[n] = v * Complex64::from_polar(1.0, 0.5 * self.omega * (n * n) as f64);
        }
        self.forward.process(&mut buf);
        buf.iter_mut().zip(&self.kernel).for_each(|(b, k)| *b *= k);
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.len as f64;
        (0..self.outputs)
            .map(|k| buf[k] * scale * Complex64::from_polar(1.0, 0.5 * self.omega * (k * k) as f64))
            .collect()
    }
}

/// Auto-ambiguity surface of `w` on the given delay and Doppler grids.
///
/// Delays must be whole multiples of the sample period and both grids must be
/// uniform. Delays with `|τ| ≥ T` have no overlap and give zero rows.
pub fn aaf(w: &SampledWaveform, tau_grid: &[f64], nu_grid: &[f64]) -> Result<AmbiguitySurface> {
    if tau_grid.is_empty() || nu_grid.is_empty() {
        return invalid("delay and Doppler grids must be non-empty");
    }
    if !is_uniform(tau_grid) || !is_uniform(nu_grid) {
        return invalid("delay and Doppler grids must be uniform and increasing");
    }
    let n = w.len();
    let dt = w.sample_period();
    let lags = tau_grid
        .iter()
        .map(|&tau| {
            let lag = (tau / dt).round();
            if !tau.is_finite() || (tau - lag * dt).abs() > 1e-9 * dt {
                return invalid(format!("delay {tau} s is not a whole number of samples"));
            }
            Ok(lag as i64)
        })
        .collect::<Result<Vec<i64>>>()?;

    let nu0 = nu_grid[0];
    let dnu = if nu_grid.len() > 1 {
        nu_grid[1] - nu_grid[0]
    } else {
        0.0
    };
    let czt = ChirpZ::new(n, nu_grid.len(), 2.0 * PI * dnu * dt);
    let cell: Vec<f64> = nu_grid.iter().map(|&nu| dt * sinc(PI * nu * dt)).collect();

    let rows: Vec<Vec<Complex64>> = tau_grid
        .par_iter()
        .zip(&lags)
        .map(|(&tau, &lag)| {
            if lag.unsigned_abs() as usize >= n {
                return vec![Complex64::new(0.0, 0.0); nu_grid.len()];
            }
            let first = if lag >= 0 { 0 } else { (-lag) as usize };
            let count = n - lag.unsigned_abs() as usize;
            let product: Vec<Complex64> = (0..count)
                .map(|i| {
                    let s = first + i;
                    let y = w.samples[s] * w.samples[(s as i64 + lag) as usize].conj();
                    y * Complex64::from_polar(1.0, 2.0 * PI * nu0 * i as f64 * dt)
                })
                .collect();
            let t0 = w.time(first);
            czt.transform(&product)
                .into_iter()
                .zip(nu_grid.iter().zip(&cell))
                .map(|(s, (&nu, &c))| s * Complex64::from_polar(c, PI * nu * tau + 2.0 * PI * nu * t0))
                .collect()
        })
        .collect();
    let values = rows.concat();
    Ok(AmbiguitySurface {
        tau: tau_grid.to_vec(),
        nu: nu_grid.to_vec(),
        values,
        energy: w.energy(),
        source_waveform: None,
    })
}

/// Autocorrelation `R(τ) = χ(τ, 0)`.
pub fn acf(w: &SampledWaveform, tau_grid: &[f64]) -> Result<Vec<Complex64>> {
    Ok(aaf(w, tau_grid, &[0.0])?.values)
}

/// Mean of `|R(τ)/R(0)|²` over the grid delays with `|τ| > beyond`.
pub fn acf_pedestal_power(w: &SampledWaveform, tau_grid: &[f64], beyond: f64) -> Result<f64> {
    let Some(i0) = tau_grid.iter().position(|t| t.abs() < 0.5 * w.sample_period()) else {
        return invalid("delay grid must contain zero");
    };
    let r = acf(w, tau_grid)?;
    let peak = r[i0].norm_sqr();
    let side: Vec<f64> = tau_grid
        .iter()
        .zip(&r)
        .filter(|(t, _)| t.abs() > beyond)
        .map(|(_, v)| v.norm_sqr() / peak)
        .collect();
    if side.is_empty() {
        return invalid(format!("no grid delays beyond {beyond} s"));
    }
    Ok(side.iter().sum::<f64>() / side.len() as f64)
}

/// Mainlobe and sidelobe-pedestal measurements of an ambiguity surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThumbtackMetrics {
    /// −3 dB width of `|χ(τ, 0)|²` in seconds.
    pub delay_width: f64,
    /// −3 dB width of `|χ(0, ν)|²` in Hz.
    pub doppler_width: f64,
    /// Largest `|χ|` outside three mainlobe widths, dB relative to `|χ(0,0)|`.
    pub pedestal_peak_db: f64,
    /// Mean `|χ|²` outside three mainlobe widths, dB relative to `|χ(0,0)|²`.
    pub pedestal_mean_db: f64,
    /// Mean `|χ(τ, 0)|²` for `|τ|` beyond three delay widths, dB relative to
    /// `|χ(0,0)|²`. `None` when three widths already cover the delay grid.
    pub acf_pedestal_mean_db: Option<f64>,
}

/// Minimum number of grid samples that must fall inside the mainlobe on each axis.
pub const MIN_MAINLOBE_SAMPLES: usize = 10;

/// Measures the mainlobe at −3 dB and summarizes the region beyond three
/// mainlobe widths on either axis. The mainlobe (peak to first minimum on each
/// side) must span at least ten samples per axis.
pub fn thumbtack_metrics(surface: &AmbiguitySurface) -> Result<ThumbtackMetrics> {
    let zero = |g: &[f64]| {
        let h = if g.len() > 1 { (g[1] - g[0]).abs() } else { 1.0 };
        g.iter().position(|v| v.abs() <= 1e-9 * h)
    };
    let (Some(i0), Some(j0)) = (zero(&surface.tau), zero(&surface.nu)) else {
        return invalid("surface grids must contain zero delay and zero Doppler");
    };
    let peak = surface.get(i0, j0).norm();
    if peak == 0.0 {
        return invalid("surface vanishes at the origin");
    }
    let delay_cut: Vec<f64> = (0..surface.tau.len())
        .map(|i| (surface.get(i, j0).norm() / peak).powi(2))
        .collect();
    let doppler_cut: Vec<f64> = (0..surface.nu.len())
        .map(|j| (surface.get(i0, j).norm() / peak).powi(2))
        .collect();
    let delay_width = half_power_width(&delay_cut, &surface.tau, i0, "delay")?;
    let doppler_width = half_power_width(&doppler_cut, &surface.nu, j0, "Doppler")?;

    let (tau_lim, nu_lim) = (3.0 * delay_width, 3.0 * doppler_width);
    let mut max_mag: f64 = 0.0;
    let mut sum_sq = 0.0;
    let mut count = 0usize;
    for (i, tau) in surface.tau.iter().enumerate() {
        for (j, nu) in surface.nu.iter().enumerate() {
            if tau.abs() > tau_lim || nu.abs() > nu_lim {
                let v = surface.get(i, j).norm() / peak;
                max_mag = max_mag.max(v);
                sum_sq += v * v;
                count += 1;
            }
        }
    }
    if count == 0 {
        return invalid("surface has no samples beyond three mainlobe widths");
    }
    let acf_side: Vec<f64> = surface
        .tau
        .iter()
        .zip(&delay_cut)
        .filter(|(t, _)| t.abs() > tau_lim)
        .map(|(_, v)| *v)
        .collect();
    let acf_pedestal_mean_db = (!acf_side.is_empty())
        .then(|| 10.0 * (acf_side.iter().sum::<f64>() / acf_side.len() as f64).log10());
    Ok(ThumbtackMetrics {
        delay_width,
        doppler_width,
        pedestal_peak_db: 20.0 * max_mag.log10(),
        pedestal_mean_db: 10.0 * (sum_sq / count as f64).log10(),
        acf_pedestal_mean_db,
    })
}

/// Width between the −3 dB crossings either side of `center`, linearly
/// interpolated in power.
fn half_power_width(cut: &[f64], axis: &[f64], center: usize, name: &str) -> Result<f64> {
    let crossing = |dir: i64| -> Result<(f64, usize)> {
        let mut i = center as i64;
        loop {
            let next = i + dir;
            if next < 0 || next as usize >= cut.len() {
                return invalid(format!("{name} axis does not reach the -3 dB point"));
            }
            let (a, b) = (cut[i as usize], cut[next as usize]);
            if b < 0.5 {
                let frac = (a - 0.5) / (a - b);
                let x = axis[i as usize] + frac * (axis[next as usize] - axis[i as usize]);
                // continue to the first local minimum to size the mainlobe
                let mut end = next;
                while end + dir >= 0
                    && ((end + dir) as usize) < cut.len()
                    && cut[(end + dir) as usize] < cut[end as usize]
                {
                    end += dir;
                }
                return Ok((x, end.unsigned_abs() as usize));
            }
            i = next;
        }
    };
    let (right, r_end) = crossing(1)?;
    let (left, l_end) = crossing(-1)?;
    let samples = r_end.abs_diff(l_end) + 1;
    if samples < MIN_MAINLOBE_SAMPLES {
        return invalid(format!(
            "{name} grid is too coarse: mainlobe spans {samples} samples, need {MIN_MAINLOBE_SAMPLES}"
        ));
    }
    Ok(right - left)
}
