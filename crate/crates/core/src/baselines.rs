//! Classical estimators: Lomb-Scargle, the FFT periodogram and MUSIC.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{BnseError, Result};
use crate::gp::TimeSeries;
use crate::linalg::symmetric_eigen;
use crate::spectrum::{Method, SpectrumEstimate};

/// Relative spacing deviation tolerated by the uniform-sampling methods.
pub const UNIFORM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LsNormalization {
    /// Fraction of the (mean-removed, if fitted) sum of squares explained.
    Standard,
    /// Raw reduction of the residual sum of squares.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsConfig {
    pub grid: Vec<f64>,
    pub fit_mean: bool,
    pub normalization: LsNormalization,
}

impl LsConfig {
    pub fn new(grid: Vec<f64>) -> Self {
        Self {
            grid,
            fit_mean: true,
            normalization: LsNormalization::None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(BnseError::InvalidInput("Lomb-Scargle grid is empty".into()));
        }
        if self.grid.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
            return Err(BnseError::InvalidInput("Lomb-Scargle grid must be nonnegative".into()));
        }
        if self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(BnseError::InvalidInput("Lomb-Scargle grid must be increasing".into()));
        }
        Ok(())
    }
}

/// Lomb-Scargle power with the Scargle phase shift `τ`, which makes the
/// sine and cosine columns orthogonal at every frequency.
///
/// The power is the reduction of the residual sum of squares obtained by
/// fitting `a cos ω(t-τ) + b sin ω(t-τ)`:
/// `(Σ y c)² / Σ c² + (Σ y s)² / Σ s²`. A column that vanishes on the data
/// (e.g. the sine at zero frequency) is dropped from the sum.
pub fn lomb_scargle(data: &TimeSeries, cfg: &LsConfig) -> Result<SpectrumEstimate> {
    cfg.validate()?;
    let n = data.len();
    if n < 3 {
        return Err(BnseError::InvalidInput(format!("Lomb-Scargle needs N >= 3, got {n}")));
    }
    // centring the times only changes τ, not the power
    let mid = data.midpoint();
    let t: Vec<f64> = data.times().iter().map(|t| t - mid).collect();
    let mean = if cfg.fit_mean { data.mean() } else { 0.0 };
    let y: Vec<f64> = data.values().iter().map(|v| v - mean).collect();
    let total_ss: f64 = y.iter().map(|v| v * v).sum();
    let degenerate_tol = 1e-12 * n as f64;

    let power = cfg
        .grid
        .iter()
        .map(|&xi| {
            let omega = 2.0 * PI * xi;
            let tau = if omega == 0.0 {
                0.0
            } else {
                let (s2, c2) = t.iter().fold((0.0, 0.0), |(s, c), &ti| {
                    let (sn, cs) = (2.0 * omega * ti).sin_cos();
                    (s + sn, c + cs)
                });
                0.5 * s2.atan2(c2) / omega
            };
            let (mut yc, mut ys, mut cc, mut ss) = (0.0, 0.0, 0.0, 0.0);
            for (&ti, &yi) in t.iter().zip(&y) {
                let (s, c) = (omega * (ti - tau)).sin_cos();
                yc += yi * c;
                ys += yi * s;
                cc += c * c;
                ss += s * s;
            }
            let mut p = 0.0;
            if cc > degenerate_tol {
                p += yc * yc / cc;
            }
            if ss > degenerate_tol {
                p += ys * ys / ss;
            }
            if cc <= degenerate_tol && ss <= degenerate_tol {
                log::warn!("Lomb-Scargle: degenerate design at frequency {xi}; power set to 0");
                p = 0.0;
            }
            match cfg.normalization {
                LsNormalization::None => p,
                LsNormalization::Standard if total_ss > 0.0 => p / total_ss,
                LsNormalization::Standard => 0.0,
            }
        })
        .collect();
    Ok(SpectrumEstimate::point(Method::LombScargle, cfg.grid.clone(), power))
}

/// Converts unnormalized Lomb-Scargle power into the units of the squared
/// modulus of a continuous-time Fourier transform: `N Δt² / 2` with
/// `Δt = span / (N - 1)` the mean sampling step.
pub fn lomb_scargle_energy_scale(data: &TimeSeries) -> f64 {
    let n = data.len() as f64;
    let dt = data.span() / (n - 1.0);
    0.5 * n * dt * dt
}

/// One-sided FFT periodogram `|X_k|² / N`, interior bins doubled so the
/// one-sided values sum to the two-sided total. `zero_pad_factor` multiplies
/// the transform length.
///
/// With `Δξ = 1 / (N·zero_pad_factor)` the normalized bin width,
/// `Σ power · Δξ` equals the mean square of the data.
pub fn periodogram(data: &TimeSeries, zero_pad_factor: usize) -> Result<SpectrumEstimate> {
    let n = data.len();
    if n < 2 {
        return Err(BnseError::InvalidInput(format!("periodogram needs N >= 2, got {n}")));
    }
    if zero_pad_factor == 0 {
        return Err(BnseError::InvalidInput("zero_pad_factor must be >= 1".into()));
    }
    let dt = data.uniform_step(UNIFORM_TOL)?;
    let len = n * zero_pad_factor;
    let mut buf: Vec<Complex<f64>> = data
        .values()
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(len)
        .collect();
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);

    let half = len / 2;
    let (grid, power) = (0..=half)
        .map(|k| {
            let mut p = buf[k].norm_sqr() / n as f64;
            let is_nyquist = len.is_multiple_of(2) && k == half;
            if k != 0 && !is_nyquist {
                p *= 2.0;
            }
            (k as f64 / (len as f64 * dt), p)
        })
        .unzip();
    Ok(SpectrumEstimate::point(Method::Periodogram, grid, power))
}

/// The periodogram evaluated off the FFT grid, as a direct DTFT sum with the
/// same one-sided normalization as `periodogram`.
pub fn periodogram_on_grid(data: &TimeSeries, grid: &[f64]) -> Result<SpectrumEstimate> {
    let n = data.len();
    if n < 2 {
        return Err(BnseError::InvalidInput(format!("periodogram needs N >= 2, got {n}")));
    }
    let dt = data.uniform_step(UNIFORM_TOL)?;
    let nyquist = 0.5 / dt;
    let t0 = data.times()[0];
    let power = grid
        .iter()
        .map(|&xi| {
            let (re, im) = data
                .times()
                .iter()
                .zip(data.values())
                .fold((0.0, 0.0), |(re, im), (&t, &y)| {
                    let (s, c) = (2.0 * PI * xi * (t - t0)).sin_cos();
                    (re + y * c, im - y * s)
                });
            let mut p = (re * re + im * im) / n as f64;
            let edge = xi.abs() < 1e-12 * nyquist || (xi - nyquist).abs() < 1e-12 * nyquist;
            if !edge {
                p *= 2.0;
            }
            p
        })
        .collect();
    Ok(SpectrumEstimate::point(Method::Periodogram, grid.to_vec(), power))
}

/// MUSIC model order and embedding dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MusicConfig {
    /// Number of complex exponentials (two per real tone).
    pub order: usize,
    pub embedding: usize,
}

impl Default for MusicConfig {
    fn default() -> Self {
        Self {
            order: 4,
            embedding: 40,
        }
    }
}

impl MusicConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.order >= 1 && self.order < self.embedding && self.embedding <= n / 2 {
            Ok(())
        } else {
            Err(BnseError::InvalidInput(format!(
                "MUSIC needs 1 <= order < embedding <= N/2; got order {}, embedding {}, N {n}",
                self.order, self.embedding
            )))
        }
    }
}

/// Ceiling on the pseudospectrum, reached where the steering vector is
/// (numerically) orthogonal to the noise subspace.
pub const MUSIC_CEILING: f64 = 1e12;

/// MUSIC pseudospectrum `1 / ‖E_nᴴ a(ξ)‖²` from the forward-backward
/// autocorrelation of `embedding`-long snapshots.
pub fn music(data: &TimeSeries, cfg: &MusicConfig, grid: &[f64]) -> Result<SpectrumEstimate> {
    let n = data.len();
    cfg.validate(n)?;
    let dt = data.uniform_step(UNIFORM_TOL)?;
    let m = cfg.embedding;
    let y = data.values();
    let snapshots = n - m + 1;

    let mut r = DMatrix::<f64>::zeros(m, m);
    for k in 0..snapshots {
        let x = &y[k..k + m];
        for i in 0..m {
            for j in 0..m {
                r[(i, j)] += x[i] * x[j];
            }
        }
    }
    r /= snapshots as f64;
    let fb = DMatrix::from_fn(m, m, |i, j| 0.5 * (r[(i, j)] + r[(m - 1 - i, m - 1 - j)]));

    let eig = symmetric_eigen(&fb, "autocorrelation matrix")?;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let noise_cols: Vec<usize> = order[..m - cfg.order].to_vec();

    let power = grid
        .iter()
        .map(|&xi| {
            let steer: Vec<(f64, f64)> = (0..m)
                .map(|k| {
                    let (s, c) = (2.0 * PI * xi * k as f64 * dt).sin_cos();
                    (c, s)
                })
                .collect();
            let denom: f64 = noise_cols
                .iter()
                .map(|&col| {
                    let (re, im) = steer.iter().enumerate().fold((0.0, 0.0), |(re, im), (k, (c, s))| {
                        let e = eig.eigenvectors[(k, col)];
                        (re + e * c, im + e * s)
                    });
                    re * re + im * im
                })
                .sum();
            if denom <= 1.0 / MUSIC_CEILING {
                MUSIC_CEILING
            } else {
                1.0 / denom
            }
        })
        .collect();
    Ok(SpectrumEstimate::point(Method::Music, grid.to_vec(), power))
}
