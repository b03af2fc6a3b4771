//! Cylindrical generalized Bessel functions (GBFs).
//!
//! The `n`-th order, `K`-dimensional cylindrical GBF is the `n`-th Fourier
//! coefficient of a multi-tone phase-modulated carrier:
//!
//! ```text
//! J_n({z}) = (1/2π) ∫_{-π}^{π} exp(j [Σ_k z_k sin(kφ) − nφ]) dφ
//! ```
//!
//! The integrand is smooth and `2π`-periodic, so the uniform trapezoid rule
//! converges geometrically once the phase oscillation is resolved. That rule is
//! the evaluation path used everywhere in the crate. The multi-index expansion
//!
//! ```text
//! J_n({z}) = Σ_{m : Σ_k k·m_k = n} Π_k J_{m_k}(z_k)
//! ```
//!
//! is kept as [`gbf_series_oracle`], an independent check built on the
//! ordinary Bessel series.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::bessel::bessel_j;
use crate::error::{invalid, Error, Result};

/// Largest imaginary residue tolerated from the quadrature before the result is rejected.
pub const IMAGINARY_RESIDUE_TOLERANCE: f64 = 1e-9;

/// The `K`-dimensional argument `{z_1, …, z_K}` of a GBF.
#[derive(Debug, Clone, PartialEq)]
pub struct GbfArgument {
    z: Vec<f64>,
}

impl GbfArgument {
    pub fn new(z: Vec<f64>) -> Result<Self> {
        if z.is_empty() {
            return invalid("GBF argument needs at least one harmonic");
        }
        if let Some(bad) = z.iter().find(|v| !v.is_finite()) {
            return invalid(format!("GBF argument entry {bad} is not finite"));
        }
        Ok(Self { z })
    }

    /// Pairwise difference of two coefficient rows, `z_k = a_k − b_k`.
    pub fn difference(a: &[f64], b: &[f64]) -> Result<Self> {
        if a.len() != b.len() {
            return invalid(format!(
                "rows of different length ({} vs {})",
                a.len(),
                b.len()
            ));
        }
        Self::new(a.iter().zip(b).map(|(x, y)| x - y).collect())
    }

    pub fn harmonics(&self) -> usize {
        self.z.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.z
    }

    pub fn max_abs(&self) -> f64 {
        self.z.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

/// Default trapezoid resolution: `max(512, 64·K·ceil(max|z_k| + 8))`.
pub fn default_quadrature_points(harmonics: usize, max_abs: f64) -> usize {
    let scale = (max_abs + 8.0).ceil() as usize;
    (64 * harmonics * scale).max(512)
}

/// Default per-dimension truncation of the series oracle, `ceil(|z_k|) + 20`.
pub fn default_series_bounds(z: &GbfArgument) -> Vec<usize> {
    z.values().iter().map(|v| v.abs().ceil() as usize + 20).collect()
}

fn check_points(order: i32, z: &GbfArgument, points: usize) -> Result<()> {
    let floor = 2 * (order.unsigned_abs() as usize + z.harmonics()) + 2;
    if points < floor {
        return invalid(format!(
            "{points} quadrature points cannot resolve order {order} with {} harmonics",
            z.harmonics()
        ));
    }
    Ok(())
}

/// `J_n({z})` by the `points`-node periodic trapezoid rule on `[-π, π)`.
pub fn gbf_eval(order: i32, z: &GbfArgument, points: usize) -> Result<f64> {
    check_points(order, z, points)?;
    let step = 2.0 * PI / points as f64;
    let n = order as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..points {
        let phi = -PI + step * j as f64;
        let phase = modulation_phase(z.values(), phi) - n * phi;
        acc += Complex64::from_polar(1.0, phase);
    }
    acc /= points as f64;
    if acc.im.abs() > IMAGINARY_RESIDUE_TOLERANCE {
        return Err(Error::NumericalFailure(format!(
            "GBF quadrature left imaginary residue {:.3e}; increase quadrature points",
            acc.im
        )));
    }
    Ok(acc.re)
}

/// `∂J_0({z})/∂z_k` for every `k`, using `∂J_0/∂z_k = −⟨sin(kφ) sin(Σ z_k sin(kφ))⟩`
/// on the same trapezoid grid as [`gbf_eval`].
pub fn gbf_gradient(z: &GbfArgument, points: usize) -> Result<Vec<f64>> {
    check_points(0, z, points)?;
    let step = 2.0 * PI / points as f64;
    let mut grad = vec![0.0; z.harmonics()];
    let mut residue = 0.0;
    for j in 0..points {
        let phi = -PI + step * j as f64;
        let s = modulation_phase(z.values(), phi).sin();
        // imaginary part of the order-zero integrand
        residue += s;
        for (k, g) in grad.iter_mut().enumerate() {
            *g -= ((k + 1) as f64 * phi).sin() * s;
        }
    }
    if (residue / points as f64).abs() > IMAGINARY_RESIDUE_TOLERANCE {
        return Err(Error::NumericalFailure(
            "GBF gradient quadrature is not symmetric; increase quadrature points".into(),
        ));
    }
    for g in &mut grad {
        *g /= points as f64;
    }
    Ok(grad)
}

/// Truncated multi-index expansion of `J_n({z})` with `|m_k| ≤ max_index` in every dimension.
///
/// The truncation error is bounded by the neglected Bessel tails, roughly
/// `Σ_k (|z_k|/2)^L / L!` for `L = max_index + 1`, which vanishes
/// super-exponentially once `L > max|z_k|`.
pub fn gbf_series_oracle(order: i32, z: &GbfArgument, max_index: usize) -> Result<f64> {
    if max_index == 0 {
        return invalid("series truncation index must be positive");
    }
    if z.max_abs() > crate::bessel::SERIES_MAX_ARGUMENT {
        return invalid("series oracle is limited to |z_k| <= 20");
    }
    let bounds = vec![max_index; z.harmonics()];
    Ok(series_with_bounds(order, z, &bounds))
}

/// [`gbf_series_oracle`] with the default per-dimension truncation.
pub fn gbf_series_default(order: i32, z: &GbfArgument) -> Result<f64> {
    if z.max_abs() > crate::bessel::SERIES_MAX_ARGUMENT {
        return invalid("series oracle is limited to |z_k| <= 20");
    }
    Ok(series_with_bounds(order, z, &default_series_bounds(z)))
}

fn series_with_bounds(order: i32, z: &GbfArgument, bounds: &[usize]) -> f64 {
    // tables[k][m + bound] = J_m(z_k)
    let tables: Vec<Vec<f64>> = z
        .values()
        .iter()
        .zip(bounds)
        .map(|(&zk, &b)| {
            let b = b as i32;
            (-b..=b).map(|m| bessel_j(m, zk)).collect()
        })
        .collect();
    // reach[k] = largest |Σ_{j<=k} j·m_j| attainable by harmonics 1..=k+1
    let mut reach = Vec::with_capacity(bounds.len());
    let mut total = 0i64;
    for (k, &b) in bounds.iter().enumerate() {
        total += (k as i64 + 1) * b as i64;
        reach.push(total);
    }
    let mut sum = 0.0;
    accumulate(
        bounds.len() - 1,
        order as i64,
        1.0,
        &tables,
        bounds,
        &reach,
        &mut sum,
    );
    sum
}

fn accumulate(
    k: usize,
    remaining: i64,
    partial: f64,
    tables: &[Vec<f64>],
    bounds: &[usize],
    reach: &[i64],
    sum: &mut f64,
) {
    let harmonic = k as i64 + 1;
    let bound = bounds[k] as i64;
    if k == 0 {
        if remaining.abs() <= bound {
            *sum += partial * tables[0][(remaining + bound) as usize];
        }
        return;
    }
    for m in -bound..=bound {
        let rest = remaining - harmonic * m;
        if rest.abs() > reach[k - 1] {
            continue;
        }
        let term = partial * tables[k][(m + bound) as usize];
        // the remaining factors are all bounded by one in magnitude
        if term.abs() < 1e-24 {
            continue;
        }
        accumulate(k - 1, rest, term, tables, bounds, reach, sum);
    }
}

#[inline]
fn modulation_phase(z: &[f64], phi: f64) -> f64 {
    z.iter()
        .enumerate()
        .map(|(k, zk)| zk * ((k + 1) as f64 * phi).sin())
        .sum()
}

/// Order-zero GBFs between every pair of a set of coefficient rows, evaluated
/// through per-row unit phasors.
///
/// For rows `a` and `b`, `exp(jΣ(a_k−b_k) sin kφ) = e_a(φ)·conj(e_b(φ))` with
/// `e_a(φ) = exp(jΣ a_k sin kφ)`, so every pairwise `J_0({a−b})` is an inner
/// product of two phasor vectors on the trapezoid grid. The phase is odd in
/// `φ`, which lets the sum run over the open half period `(0, π)` plus the
/// two nodes at `0` and `π` where every phasor equals one.
#[derive(Debug, Clone)]
pub struct PhasorGram {
    points: usize,
    harmonics: usize,
    rows: usize,
    /// `sin(kφ_j)` for the interior half-period nodes, harmonic-major.
    sines: Vec<f64>,
    /// `e_m(φ_j)` for the interior half-period nodes, row-major.
    phasors: Vec<Complex64>,
}

impl PhasorGram {
    /// `coefficients` is a row-major `rows × harmonics` matrix; `points` must be even.
    pub fn new(coefficients: &[f64], harmonics: usize, points: usize) -> Result<Self> {
        let mut gram = Self {
            points: 0,
            harmonics,
            rows: 0,
            sines: Vec::new(),
            phasors: Vec::new(),
        };
        gram.update(coefficients, points)?;
        Ok(gram)
    }

    /// Recomputes the phasors for new coefficients, reusing the sine table when
    /// the grid size is unchanged.
    pub fn update(&mut self, coefficients: &[f64], points: usize) -> Result<()> {
        let harmonics = self.harmonics;
        if harmonics == 0 || coefficients.len() % harmonics != 0 {
            return invalid("coefficient matrix shape does not match harmonic count");
        }
        if points % 2 != 0 || points < 2 * harmonics + 2 {
            return invalid(format!(
                "phasor grid needs an even point count of at least {}",
                2 * harmonics + 2
            ));
        }
        let rows = coefficients.len() / harmonics;
        let inner = points / 2 - 1;
        if points != self.points {
            let step = 2.0 * PI / points as f64;
            self.sines = vec![0.0; harmonics * inner];
            for k in 0..harmonics {
                for j in 0..inner {
                    self.sines[k * inner + j] = ((k + 1) as f64 * step * (j + 1) as f64).sin();
                }
            }
            self.points = points;
        }
        self.rows = rows;
        self.phasors.resize(rows * inner, Complex64::new(0.0, 0.0));
        let mut phase = vec![0.0; inner];
        for m in 0..rows {
            phase.iter_mut().for_each(|p| *p = 0.0);
            for k in 0..harmonics {
                let a = coefficients[m * harmonics + k];
                if a == 0.0 {
                    continue;
                }
                let row = &self.sines[k * inner..(k + 1) * inner];
                for (p, s) in phase.iter_mut().zip(row) {
                    *p += a * s;
                }
            }
            for (e, p) in self.phasors[m * inner..(m + 1) * inner].iter_mut().zip(&phase) {
                *e = Complex64::from_polar(1.0, *p);
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn points(&self) -> usize {
        self.points
    }

    fn inner(&self) -> usize {
        self.points / 2 - 1
    }

    fn row(&self, m: usize) -> &[Complex64] {
        let inner = self.inner();
        &self.phasors[m * inner..(m + 1) * inner]
    }

    /// `J_0({a − b})` for rows `a` and `b`.
    pub fn j0(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return 1.0;
        }
        let dot: f64 = self
            .row(a)
            .iter()
            .zip(self.row(b))
            .map(|(x, y)| x.re * y.re + x.im * y.im)
            .sum();
        (2.0 + 2.0 * dot) / self.points as f64
    }

    /// Row-major `rows × rows` matrix of `J_0` between every pair of rows.
    pub fn j0_matrix(&self) -> Vec<f64> {
        let n = self.rows;
        let mut out = vec![0.0; n * n];
        for a in 0..n {
            out[a * n + a] = 1.0;
            for b in a + 1..n {
                let v = self.j0(a, b);
                out[a * n + b] = v;
                out[b * n + a] = v;
            }
        }
        out
    }

    /// Given symmetric pair weights `w[a][b]`, returns the row-major
    /// `rows × harmonics` matrix `Σ_b w[a][b] · ∂J_0({a−b})/∂z_k`, which is the
    /// derivative of `Σ_{a<b} w[a][b] J_0({a−b})` with respect to coefficient
    /// `(a, k)`.
    pub fn weighted_gradient(&self, weights: &[f64]) -> Vec<f64> {
        let n = self.rows;
        let inner = self.inner();
        let mut mixed = vec![0.0; inner];
        let mut grad = vec![0.0; n * self.harmonics];
        let scale = -2.0 / self.points as f64;
        for a in 0..n {
            mixed.iter_mut().for_each(|v| *v = 0.0);
            let ea = self.row(a);
            for b in 0..n {
                let w = weights[a * n + b];
                if b == a || w == 0.0 {
                    continue;
                }
                // Im(e_a conj(e_b)) = sin(phase_a − phase_b)
                for ((v, x), y) in mixed.iter_mut().zip(ea).zip(self.row(b)) {
                    *v += w * (x.im * y.re - x.re * y.im);
                }
            }
            for k in 0..self.harmonics {
                let s = &self.sines[k * inner..(k + 1) * inner];
                let dot: f64 = s.iter().zip(&mixed).map(|(p, q)| p * q).sum();
                grad[a * self.harmonics + k] = scale * dot;
            }
        }
        grad
    }
}
