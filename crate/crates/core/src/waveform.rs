//! Multi-tone sinusoidal FM (MTSFM) waveforms.
//!
//! Waveform `m` of a set of `M` has the instantaneous phase
//! `φ_m(t) = Σ_k α_{m,k} sin(2πkt/T)` on `−T/2 ≤ t ≤ T/2` and the complex
//! envelope `x_m(t) = exp(jφ_m(t)) / √(MT)`, so every waveform carries energy
//! `1/M`. The modulation function is the cosine series
//! `f_m(t) = Σ_k (k/T)·α_{m,k} cos(2πkt/T)`; the constant term is always zero.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Result};

/// Points on the time grid used for swept-bandwidth and peak-frequency scans.
pub const FREQUENCY_SCAN_POINTS: usize = 4096;

/// Oversampling factor over the peak instantaneous frequency.
pub const OVERSAMPLING: f64 = 8.0;

/// The `M × K` matrix of modulation indices `α_{m,k}` together with the pulse length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IndexSetRepr", into = "IndexSetRepr")]
pub struct ModulationIndexSet {
    alpha: Vec<f64>,
    waveforms: usize,
    harmonics: usize,
    duration: f64,
}

#[derive(Serialize, Deserialize)]
struct IndexSetRepr {
    duration: f64,
    alpha: Vec<Vec<f64>>,
}

impl TryFrom<IndexSetRepr> for ModulationIndexSet {
    type Error = crate::Error;

    fn try_from(r: IndexSetRepr) -> Result<Self> {
        ModulationIndexSet::from_rows(&r.alpha, r.duration)
    }
}

impl From<ModulationIndexSet> for IndexSetRepr {
    fn from(s: ModulationIndexSet) -> Self {
        IndexSetRepr {
            duration: s.duration,
            alpha: s.rows().map(<[f64]>::to_vec).collect(),
        }
    }
}

impl ModulationIndexSet {
    /// Builds a set from a row-major `waveforms × harmonics` matrix.
    pub fn new(alpha: Vec<f64>, waveforms: usize, harmonics: usize, duration: f64) -> Result<Self> {
        if waveforms == 0 || harmonics == 0 {
            return invalid("index set needs at least one waveform and one harmonic");
        }
        if alpha.len() != waveforms * harmonics {
            return invalid(format!(
                "expected {} modulation indices, got {}",
                waveforms * harmonics,
                alpha.len()
            ));
        }
        if !(duration.is_finite() && duration > 0.0) {
            return invalid(format!("waveform duration {duration} must be positive"));
        }
        if alpha.iter().any(|a| !a.is_finite()) {
            return invalid("modulation indices must be finite");
        }
        Ok(Self {
            alpha,
            waveforms,
            harmonics,
            duration,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], duration: f64) -> Result<Self> {
        let harmonics = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != harmonics) {
            return invalid("all index rows must have the same harmonic count");
        }
        Self::new(rows.concat(), rows.len(), harmonics, duration)
    }

    pub fn waveforms(&self) -> usize {
        self.waveforms
    }

    pub fn harmonics(&self) -> usize {
        self.harmonics
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.alpha
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.alpha[m * self.harmonics..(m + 1) * self.harmonics]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.alpha.chunks_exact(self.harmonics)
    }

    pub fn get(&self, m: usize, k: usize) -> f64 {
        self.alpha[m * self.harmonics + k]
    }

    pub fn set(&mut self, m: usize, k: usize, value: f64) {
        self.alpha[m * self.harmonics + k] = value;
    }

    /// Largest `|α_{m,k} − α_{m',k}|` over all pairs of rows and harmonics.
    pub fn max_pairwise_difference(&self) -> f64 {
        let mut out: f64 = 0.0;
        for k in 0..self.harmonics {
            let (lo, hi) = (0..self.waveforms)
                .map(|m| self.get(m, k))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                });
            out = out.max(hi - lo);
        }
        out
    }

    /// Equivalent modulation-function coefficients `a_{m,k} = α_{m,k}·k/T` in Hz.
    pub fn frequency_coefficients(&self) -> Vec<f64> {
        self.alpha
            .iter()
            .enumerate()
            .map(|(i, a)| a * ((i % self.harmonics) + 1) as f64 / self.duration)
            .collect()
    }
}

fn check_support(duration: f64, t: f64) -> Result<()> {
    let half = 0.5 * duration;
    if !(t.is_finite() && t.abs() <= half * (1.0 + 1e-12)) {
        return invalid(format!("time {t} lies outside the pulse support [-{half}, {half}]"));
    }
    Ok(())
}

/// Instantaneous phase `Σ_k α_k sin(2πkt/T)` in radians.
pub fn phase_at(alpha_row: &[f64], duration: f64, t: f64) -> Result<f64> {
    check_support(duration, t)?;
    let w = 2.0 * PI * t / duration;
    Ok(alpha_row
        .iter()
        .enumerate()
        .map(|(k, a)| a * ((k + 1) as f64 * w).sin())
        .sum())
}

/// Instantaneous frequency `(1/2π) dφ/dt = Σ_k (k/T)·α_k cos(2πkt/T)` in Hz.
pub fn modulation_function_at(alpha_row: &[f64], duration: f64, t: f64) -> Result<f64> {
    check_support(duration, t)?;
    Ok(frequency_unchecked(alpha_row, duration, t))
}

fn frequency_unchecked(alpha_row: &[f64], duration: f64, t: f64) -> f64 {
    let w = 2.0 * PI * t / duration;
    alpha_row
        .iter()
        .enumerate()
        .map(|(k, a)| (k + 1) as f64 / duration * a * ((k + 1) as f64 * w).cos())
        .sum()
}

/// Minimum and maximum of the modulation function over a 4096-point grid on `[−T/2, T/2)`.
pub fn frequency_extent(alpha_row: &[f64], duration: f64) -> (f64, f64) {
    let step = duration / FREQUENCY_SCAN_POINTS as f64;
    (0..FREQUENCY_SCAN_POINTS)
        .map(|i| frequency_unchecked(alpha_row, duration, -0.5 * duration + step * i as f64))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), f| {
            (lo.min(f), hi.max(f))
        })
}

/// Peak-to-peak excursion of the modulation function, `Δf`, in Hz.
pub fn swept_bandwidth(alpha_row: &[f64], duration: f64) -> f64 {
    let (lo, hi) = frequency_extent(alpha_row, duration);
    hi - lo
}

/// Largest `|f(t)|` over the scan grid.
pub fn peak_frequency(alpha_row: &[f64], duration: f64) -> f64 {
    let (lo, hi) = frequency_extent(alpha_row, duration);
    lo.abs().max(hi.abs())
}

/// Squared RMS bandwidth `(2π/T)²·Σ_k k²α_k²/2` in (rad/s)².
pub fn rms_bandwidth_sq(alpha_row: &[f64], duration: f64) -> f64 {
    let scale = (2.0 * PI / duration).powi(2);
    scale
        * alpha_row
            .iter()
            .enumerate()
            .map(|(k, a)| ((k + 1) as f64 * a).powi(2) / 2.0)
            .sum::<f64>()
}

/// Smallest admissible sample rate: `8×` the peak instantaneous frequency, but never
/// fewer than 64 samples per pulse.
pub fn default_sample_rate(alpha_row: &[f64], duration: f64) -> f64 {
    (OVERSAMPLING * peak_frequency(alpha_row, duration)).max(64.0 / duration)
}

/// [`default_sample_rate`] rounded up so the pulse holds a multiple of `multiple` samples.
pub fn aligned_sample_rate(alpha_row: &[f64], duration: f64, multiple: usize) -> f64 {
    let n = (default_sample_rate(alpha_row, duration) * duration).ceil() as usize;
    let n = n.div_ceil(multiple.max(1)) * multiple.max(1);
    n as f64 / duration
}

/// A uniformly sampled, energy-normalized MTSFM waveform.
///
/// Sample `i` sits at the center of the `i`-th of `N` equal cells tiling
/// `[−T/2, T/2)`, so sums of `|x|²·Δt` reproduce the continuous energy exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledWaveform {
    pub samples: Vec<Complex64>,
    pub sample_rate: f64,
    pub duration: f64,
    /// Energy the waveform is normalized to (`1/M`).
    pub energy_norm: f64,
}

impl SampledWaveform {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_period(&self) -> f64 {
        1.0 / self.sample_rate
    }

    pub fn time(&self, i: usize) -> f64 {
        -0.5 * self.duration + (i as f64 + 0.5) / self.sample_rate
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.sample_rate
    }
}

/// Samples `x(t) = exp(jφ(t))/√(MT)` at cell centers across the pulse.
///
/// The sample count is `round(T·fs)`; the stored rate is the effective one.
pub fn sample_waveform(
    alpha_row: &[f64],
    duration: f64,
    waveforms: usize,
    sample_rate: f64,
) -> Result<SampledWaveform> {
    if waveforms == 0 {
        return invalid("waveform count must be positive");
    }
    if !(duration.is_finite() && duration > 0.0) {
        return invalid("duration must be positive");
    }
    let needed = OVERSAMPLING * peak_frequency(alpha_row, duration);
    if !(sample_rate.is_finite() && sample_rate > 0.0) || sample_rate < needed * (1.0 - 1e-12) {
        return invalid(format!(
            "sample rate {sample_rate} Hz is below {needed} Hz (8x the peak instantaneous frequency)"
        ));
    }
    let n = (sample_rate * duration).round() as usize;
    if n < 2 {
        return invalid("sample rate leaves fewer than two samples in the pulse");
    }
    let fs = n as f64 / duration;
    let amplitude = 1.0 / (waveforms as f64 * duration).sqrt();
    let samples = (0..n)
        .map(|i| {
            let t = -0.5 * duration + (i as f64 + 0.5) / fs;
            let w = 2.0 * PI * t / duration;
            let phase: f64 = alpha_row
                .iter()
                .enumerate()
                .map(|(k, a)| a * ((k + 1) as f64 * w).sin())
                .sum();
            Complex64::from_polar(amplitude, phase)
        })
        .collect();
    Ok(SampledWaveform {
        samples,
        sample_rate: fs,
        duration,
        energy_norm: 1.0 / waveforms as f64,
    })
}

/// Energy spectrum on a centered frequency axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Bin frequencies in Hz, ascending, from `−fs/2`.
    pub frequency: Vec<f64>,
    /// Energy per bin, `|X(f)|²·Δf`; sums to the waveform energy.
    pub energy: Vec<f64>,
    /// `10·log10` of the energy, normalized so the peak bin is 0 dB.
    pub power_db: Vec<f64>,
}

impl Spectrum {
    pub fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.frequency.iter().copied().zip(self.power_db.iter().copied())
    }

    pub fn total_energy(&self) -> f64 {
        self.energy.iter().sum()
    }

    /// Energy in bins whose center lies in `[lo, hi]`.
    pub fn energy_within(&self, lo: f64, hi: f64) -> f64 {
        self.frequency
            .iter()
            .zip(&self.energy)
            .filter(|(f, _)| (lo..=hi).contains(*f))
            .map(|(_, e)| e)
            .sum()
    }
}

/// Magnitude-squared spectrum of a sampled waveform using an `fft_size`-point DFT.
pub fn spectrum(w: &SampledWaveform, fft_size: usize) -> Result<Spectrum> {
    if fft_size < w.len() {
        return invalid(format!(
            "FFT size {fft_size} is shorter than the {} samples",
            w.len()
        ));
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); fft_size];
    buf[..w.len()].copy_from_slice(&w.samples);
    FftPlanner::new().plan_fft_forward(fft_size).process(&mut buf);
    let dt = w.sample_period();
    let df = w.sample_rate / fft_size as f64;
    let half = fft_size / 2;
    let mut frequency = Vec::with_capacity(fft_size);
    let mut energy = Vec::with_capacity(fft_size);
    for i in 0..fft_size {
        let bin = (i + fft_size - half) % fft_size;
        let signed = bin as f64 - if bin >= fft_size - half { fft_size as f64 } else { 0.0 };
        frequency.push(signed * df);
        energy.push(buf[bin].norm_sqr() * dt * dt * df);
    }
    let peak = energy.iter().cloned().fold(0.0, f64::max);
    let power_db = energy.iter().map(|e| 10.0 * (e / peak).log10()).collect();
    Ok(Spectrum {
        frequency,
        energy,
        power_db,
    })
}

/// Short-time Fourier magnitudes with a periodic Hann window.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    /// Frame center times in seconds.
    pub times: Vec<f64>,
    /// Bin frequencies in Hz, ascending.
    pub frequencies: Vec<f64>,
    /// `|STFT|`, frame-major (`times.len() × frequencies.len()`).
    pub magnitude: Vec<f64>,
}

impl Spectrogram {
    pub fn frame(&self, i: usize) -> &[f64] {
        let n = self.frequencies.len();
        &self.magnitude[i * n..(i + 1) * n]
    }

    /// Frequency of the strongest bin in each frame.
    pub fn ridge(&self) -> Vec<f64> {
        (0..self.times.len())
            .map(|i| {
                let frame = self.frame(i);
                let best = (0..frame.len())
                    .max_by(|&a, &b| frame[a].total_cmp(&frame[b]))
                    .unwrap_or(0);
                self.frequencies[best]
            })
            .collect()
    }

    pub fn bin_width(&self) -> f64 {
        self.frequencies.get(1).map_or(0.0, |f| f - self.frequencies[0])
    }
}

/// Spectrogram with `window_len`-sample Hann frames advanced by `hop` samples
/// (a quarter window gives the usual 75% overlap).
pub fn spectrogram(w: &SampledWaveform, window_len: usize, hop: usize) -> Result<Spectrogram> {
    if window_len < 2 || window_len > w.len() {
        return invalid(format!(
            "window length {window_len} must lie in [2, {}]",
            w.len()
        ));
    }
    if hop == 0 {
        return invalid("hop must be positive");
    }
    let window: Vec<f64> = (0..window_len)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / window_len as f64).cos())
        .collect();
    let fft = FftPlanner::new().plan_fft_forward(window_len);
    let half = window_len / 2;
    let df = w.sample_rate / window_len as f64;
    let frequencies: Vec<f64> = (0..window_len)
        .map(|i| (i as f64 - half as f64) * df)
        .collect();
    let mut times = Vec::new();
    let mut magnitude = Vec::new();
    let mut buf = vec![Complex64::new(0.0, 0.0); window_len];
    let mut start = 0;
    while start + window_len <= w.len() {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = w.samples[start + i] * window[i];
        }
        fft.process(&mut buf);
        for i in 0..window_len {
            magnitude.push(buf[(i + window_len - half) % window_len].norm());
        }
        times.push(-0.5 * w.duration + (start as f64 + 0.5 * window_len as f64) / w.sample_rate);
        start += hop;
    }
    Ok(Spectrogram {
        times,
        frequencies,
        magnitude,
    })
}
