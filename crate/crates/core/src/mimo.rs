//! Narrowband transmit beampatterns of a uniform linear array with
//! half-wavelength spacing, driven by a waveform set with correlation matrix `R`.
//!
//! The beampattern is `P(u) = a(u)ᴴ R a(u)` with `u = sin θ` and steering vector
//! `a(u)_m = exp(jπmu)`. All angular integrals are taken in `u`, where
//! `du = cos θ dθ`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::gbf::{default_quadrature_points, PhasorGram};
use crate::waveform::{phase_at, ModulationIndexSet};

/// Most negative eigenvalue (and beampattern value) accepted as roundoff.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Default sine-angle grid size.
pub const DEFAULT_GRID_POINTS: usize = 1001;

/// Default transition guard around the passband when measuring PSLR.
pub const DEFAULT_PSLR_GUARD: f64 = 0.05;

/// Real symmetric waveform correlation matrix with equal-power diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    size: usize,
    entries: Vec<f64>,
}

impl CorrelationMatrix {
    /// Validates and wraps a row-major `size × size` matrix. The diagonal is
    /// reset to exactly `1/size` after checking it is within `1e-9` of that.
    pub fn from_entries(size: usize, mut entries: Vec<f64>) -> Result<Self> {
        if size == 0 || entries.len() != size * size {
            return Err(Error::InvalidMatrix(format!(
                "expected {} entries for a {size}x{size} matrix",
                size * size
            )));
        }
        let diag = 1.0 / size as f64;
        for a in 0..size {
            let d = entries[a * size + a];
            if (d - diag).abs() > 1e-9 {
                return Err(Error::InvalidMatrix(format!(
                    "diagonal entry {a} is {d}, expected {diag}"
                )));
            }
            entries[a * size + a] = diag;
            for b in a + 1..size {
                let (x, y) = (entries[a * size + b], entries[b * size + a]);
                if !x.is_finite() || (x - y).abs() > 1e-12 {
                    return Err(Error::InvalidMatrix(format!(
                        "entries ({a},{b}) and ({b},{a}) differ"
                    )));
                }
                if x.abs() > diag * (1.0 + 1e-12) {
                    return Err(Error::InvalidMatrix(format!(
                        "off-diagonal ({a},{b}) = {x} exceeds 1/M"
                    )));
                }
                let avg = 0.5 * (x + y);
                entries[a * size + b] = avg;
                entries[b * size + a] = avg;
            }
        }
        let r = Self { size, entries };
        let min = r.min_eigenvalue();
        if min < -PSD_TOLERANCE {
            return Err(Error::InvalidMatrix(format!(
                "matrix is indefinite (minimum eigenvalue {min:.3e})"
            )));
        }
        Ok(r)
    }

    /// `(1/M)·I`: mutually orthogonal waveforms.
    pub fn orthogonal(size: usize) -> Self {
        let mut entries = vec![0.0; size * size];
        for a in 0..size {
            entries[a * size + a] = 1.0 / size as f64;
        }
        Self { size, entries }
    }

    /// All entries `1/M`: identical waveforms (phased array).
    pub fn coherent(size: usize) -> Self {
        Self {
            size,
            entries: vec![1.0 / size as f64; size * size],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.entries[a * self.size + b]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn trace(&self) -> f64 {
        (0..self.size).map(|a| self.get(a, a)).sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let m = DMatrix::from_row_slice(self.size, self.size, &self.entries);
        SymmetricEigen::new(m)
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    /// Coefficients `c_d` of the cosine expansion `P(u) = Σ_d c_d cos(πdu)`,
    /// `c_0 = tr R`, `c_d = 2·Σ_{m'−m=d} R_{m,m'}`.
    pub fn lag_sums(&self) -> Vec<f64> {
        lag_sums(&self.entries, self.size)
    }
}

pub(crate) fn lag_sums(entries: &[f64], size: usize) -> Vec<f64> {
    let mut c = vec![0.0; size];
    for a in 0..size {
        c[0] += entries[a * size + a];
        for b in a + 1..size {
            c[b - a] += 2.0 * entries[a * size + b];
        }
    }
    c
}

/// Strictly increasing sine-angle sample points in `[−1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AngleGrid {
    u: Vec<f64>,
}

impl TryFrom<Vec<f64>> for AngleGrid {
    type Error = Error;

    fn try_from(u: Vec<f64>) -> Result<Self> {
        AngleGrid::new(u)
    }
}

impl From<AngleGrid> for Vec<f64> {
    fn from(g: AngleGrid) -> Self {
        g.u
    }
}

impl AngleGrid {
    pub fn new(u: Vec<f64>) -> Result<Self> {
        if u.len() < 2 {
            return invalid("angle grid needs at least two points");
        }
        if u.iter().any(|v| !(-1.0..=1.0).contains(v)) {
            return invalid("angle grid values must lie in [-1, 1]");
        }
        if u.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("angle grid must be strictly increasing");
        }
        Ok(Self { u })
    }

    /// `points` uniformly spaced values from −1 to 1 inclusive.
    pub fn uniform(points: usize) -> Result<Self> {
        if points < 2 {
            return invalid("angle grid needs at least two points");
        }
        let step = 2.0 / (points - 1) as f64;
        let mut u: Vec<f64> = (0..points).map(|i| -1.0 + step * i as f64).collect();
        u[points - 1] = 1.0;
        // keep the grid exactly mirror-symmetric
        for i in 0..points / 2 {
            u[points - 1 - i] = -u[i];
        }
        if points % 2 == 1 {
            u[points / 2] = 0.0;
        }
        Self::new(u)
    }

    pub fn values(&self) -> &[f64] {
        &self.u
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Common spacing if the grid is uniform to within `1e-9` relative.
    pub fn spacing(&self) -> Option<f64> {
        let h = self.u[1] - self.u[0];
        self.u
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h)
            .then_some(h)
    }

    /// Trapezoid weights for integrating samples on this grid.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let n = self.u.len();
        let mut w = vec![0.0; n];
        for i in 0..n - 1 {
            let h = 0.5 * (self.u[i + 1] - self.u[i]);
            w[i] += h;
            w[i + 1] += h;
        }
        w
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.trapezoid_weights()
            .iter()
            .zip(values)
            .map(|(w, v)| w * v)
            .sum()
    }
}

impl Default for AngleGrid {
    fn default() -> Self {
        Self::uniform(DEFAULT_GRID_POINTS).expect("default grid is valid")
    }
}

/// A desired power density over `u` with its passband description.
#[derive(Debug, Clone, PartialEq)]
pub struct BeampatternTemplate {
    grid: AngleGrid,
    values: Vec<f64>,
    passband: Vec<(f64, f64)>,
    amplitude: f64,
}

impl BeampatternTemplate {
    /// Arbitrary template values on `grid`. `passband` lists the disjoint
    /// `u`-intervals PSLR treats as the mainlobe region.
    pub fn from_values(grid: AngleGrid, values: Vec<f64>, passband: Vec<(f64, f64)>) -> Result<Self> {
        if values.len() != grid.len() {
            return invalid("template values do not match the grid");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("template values must be finite");
        }
        let mut sorted = passband.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        for &(lo, hi) in &sorted {
            if !(-1.0..=1.0).contains(&lo) || !(-1.0..=1.0).contains(&hi) || lo > hi {
                return invalid(format!("passband [{lo}, {hi}] must lie within [-1, 1]"));
            }
        }
        if sorted.windows(2).any(|w| w[1].0 <= w[0].1) {
            return invalid("passband intervals must be disjoint");
        }
        let amplitude = values.iter().cloned().fold(0.0, f64::max);
        Ok(Self {
            grid,
            values,
            passband: sorted,
            amplitude,
        })
    }

    pub fn grid(&self) -> &AngleGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn passband(&self) -> &[(f64, f64)] {
        &self.passband
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// Distance from `u` to the nearest passband interval (zero inside).
    pub fn distance_to_passband(&self, u: f64) -> f64 {
        self.passband
            .iter()
            .map(|&(lo, hi)| (lo - u).max(u - hi).max(0.0))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Flat-top template: `A` on `|u| ≤ halfwidth`, zero elsewhere, with
/// `A·2·halfwidth = M` so the template carries total power `M`.
pub fn desired_beampattern(
    passband_halfwidth: f64,
    waveforms: usize,
    grid: &AngleGrid,
) -> Result<BeampatternTemplate> {
    if !(passband_halfwidth > 0.0 && passband_halfwidth <= 1.0) {
        return invalid(format!(
            "passband half-width {passband_halfwidth} must lie in (0, 1]"
        ));
    }
    if waveforms == 0 {
        return invalid("waveform count must be positive");
    }
    let amplitude = waveforms as f64 / (2.0 * passband_halfwidth);
    // grid points within rounding of the edge count as inside
    let edge = passband_halfwidth * (1.0 + 1e-12);
    let values = grid
        .values()
        .iter()
        .map(|u| if u.abs() <= edge { amplitude } else { 0.0 })
        .collect();
    let mut t = BeampatternTemplate::from_values(
        grid.clone(),
        values,
        vec![(-passband_halfwidth, passband_halfwidth)],
    )?;
    t.amplitude = amplitude;
    Ok(t)
}

/// `a(u)_m = exp(jπmu)` for `m = 0..M`.
pub fn steering_vector(u: f64, waveforms: usize) -> Result<Vec<Complex64>> {
    if !(u.is_finite() && u.abs() <= 1.0) {
        return invalid(format!("sine angle {u} must lie in [-1, 1]"));
    }
    Ok((0..waveforms)
        .map(|m| Complex64::from_polar(1.0, PI * m as f64 * u))
        .collect())
}

/// GBF correlation matrix: `R_{m,m'} = J_0({α_m − α_{m'}})/M`.
///
/// The GBFs share one trapezoid grid sized by the largest pairwise index
/// difference, so every entry is resolved at least as finely as a standalone
/// [`gbf_eval`](crate::gbf::gbf_eval) call would be.
pub fn correlation_matrix_gbf(idx: &ModulationIndexSet) -> Result<CorrelationMatrix> {
    let gram = index_gram(idx)?;
    let m = idx.waveforms();
    let scale = 1.0 / m as f64;
    let entries = gram.j0_matrix().into_iter().map(|v| v * scale).collect();
    CorrelationMatrix::from_entries(m, entries)
}

pub(crate) fn index_gram(idx: &ModulationIndexSet) -> Result<PhasorGram> {
    let points = default_quadrature_points(idx.harmonics(), idx.max_pairwise_difference());
    PhasorGram::new(idx.as_slice(), idx.harmonics(), points)
}

/// Correlation matrix from the time-domain inner products
/// `∫ x_m(t) x*_{m'}(t) dt` by the trapezoid rule on `points` intervals of the pulse.
pub fn correlation_matrix_numeric(idx: &ModulationIndexSet, points: usize) -> Result<CorrelationMatrix> {
    if points < 2 {
        return invalid("numeric correlation needs at least two intervals");
    }
    let m = idx.waveforms();
    let t_len = idx.duration();
    let dt = t_len / points as f64;
    let amp2 = 1.0 / (m as f64 * t_len);
    let mut signals = vec![Complex64::new(0.0, 0.0); m * (points + 1)];
    for w in 0..m {
        for i in 0..=points {
            let t = (-0.5 * t_len + dt * i as f64).clamp(-0.5 * t_len, 0.5 * t_len);
            signals[w * (points + 1) + i] = Complex64::from_polar(1.0, phase_at(idx.row(w), t_len, t)?);
        }
    }
    let mut entries = vec![0.0; m * m];
    for a in 0..m {
        for b in a..m {
            let xa = &signals[a * (points + 1)..(a + 1) * (points + 1)];
            let xb = &signals[b * (points + 1)..(b + 1) * (points + 1)];
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..=points {
                let w = if i == 0 || i == points { 0.5 } else { 1.0 };
                acc += xa[i] * xb[i].conj() * w;
            }
            acc *= amp2 * dt;
            if acc.im.abs() > 1e-9 {
                return Err(Error::NumericalFailure(format!(
                    "inner product ({a},{b}) has imaginary part {:.3e}",
                    acc.im
                )));
            }
            entries[a * m + b] = acc.re;
            entries[b * m + a] = acc.re;
        }
    }
    CorrelationMatrix::from_entries(m, entries)
}

/// `P(u) = a(u)ᴴ R a(u)` on every grid point. Values down to `−1e-10` are
/// clipped to zero; anything more negative means `R` is not PSD.
pub fn beampattern(r: &CorrelationMatrix, grid: &AngleGrid) -> Result<Vec<f64>> {
    let m = r.size();
    grid.values()
        .iter()
        .map(|&u| {
            let a = steering_vector(u, m)?;
            let mut p = Complex64::new(0.0, 0.0);
            for i in 0..m {
                let mut row = Complex64::new(0.0, 0.0);
                for j in 0..m {
                    row += r.get(i, j) * a[j];
                }
                p += a[i].conj() * row;
            }
            clip(p.re, u)
        })
        .collect()
}

fn clip(p: f64, u: f64) -> Result<f64> {
    if p < -PSD_TOLERANCE {
        return Err(Error::InvalidMatrix(format!(
            "beampattern is negative ({p:.3e}) at u = {u}"
        )));
    }
    Ok(p.max(0.0))
}

/// Beampattern of a real symmetric `R` through its cosine expansion; agrees with
/// [`beampattern`] to roundoff.
pub fn beampattern_real(r: &CorrelationMatrix, grid: &AngleGrid) -> Result<Vec<f64>> {
    let c = r.lag_sums();
    grid.values()
        .iter()
        .map(|&u| {
            let p: f64 = c
                .iter()
                .enumerate()
                .map(|(d, cd)| cd * (PI * d as f64 * u).cos())
                .sum();
            clip(p, u)
        })
        .collect()
}

/// Peak-to-sidelobe level ratio in dB: the largest `P` more than `guard` away
/// from every passband interval over the largest `P` inside the passband.
pub fn pslr(pattern: &[f64], template: &BeampatternTemplate, guard: f64) -> Result<f64> {
    let u = template.grid().values();
    if pattern.len() != u.len() {
        return invalid("beampattern and template grids differ");
    }
    if !(guard >= 0.0) {
        return invalid("guard must be non-negative");
    }
    let mut main = f64::NEG_INFINITY;
    let mut side = f64::NEG_INFINITY;
    for (&ui, &p) in u.iter().zip(pattern) {
        let d = template.distance_to_passband(ui);
        if d == 0.0 {
            main = main.max(p);
        } else if d > guard {
            side = side.max(p);
        }
    }
    if side == f64::NEG_INFINITY {
        return invalid("no grid points fall in the sidelobe region");
    }
    if main == f64::NEG_INFINITY {
        return invalid("no grid points fall in the passband");
    }
    Ok(10.0 * (side / main).log10())
}

/// Fraction of `∫P du` falling within `|u| ≤ halfwidth`.
pub fn power_fraction_within(pattern: &[f64], grid: &AngleGrid, halfwidth: f64) -> f64 {
    let w = grid.trapezoid_weights();
    let edge = halfwidth * (1.0 + 1e-12);
    let (inside, total) = grid
        .values()
        .iter()
        .zip(pattern)
        .zip(&w)
        .fold((0.0, 0.0), |(i, t), ((u, p), w)| {
            let v = p * w;
            (if u.abs() <= edge { i + v } else { i }, t + v)
        });
    inside / total
}
