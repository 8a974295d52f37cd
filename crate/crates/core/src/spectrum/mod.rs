//! Local-spectrum statistics.
//!
//! The local spectrum at centre `c` is the Fourier transform of the signal
//! seen through a Gaussian window,
//! `F_c(ξ) = ∫ f(t) exp(-α (t-c)²) exp(-j 2π ξ (t-c)) dt`.
//! Under a stationary GP prior it is a complex Gaussian process jointly
//! Gaussian with the observations, so conditioning on data gives its
//! posterior in closed form. For spectral-mixture kernels every covariance
//! is exact; other kernels use a delta approximation of the window's
//! spectral smoothing, valid when the window is wide.

mod estimate;

use std::f64::consts::PI;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use estimate::{linspace, Method, SpectrumEstimate, CSV_HEADER};

use crate::error::{BnseError, Result};
use crate::gp::{TimeSeries, TrainedGp};
use crate::kernels::{Kernel, SmKernel, StationaryKernel};
use crate::linalg::{cholesky_with_jitter, mean_diagonal};

/// Gaussian window `exp(-α (t - c)²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    /// Decay, in inverse squared time. Strictly positive.
    pub alpha: f64,
    pub centre: f64,
}

impl WindowConfig {
    pub fn new(alpha: f64, centre: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(BnseError::InvalidInput(format!(
                "window decay alpha must be > 0, got {alpha}"
            )));
        }
        if !centre.is_finite() {
            return Err(BnseError::InvalidInput("window centre must be finite".into()));
        }
        Ok(Self { alpha, centre })
    }

    /// Window of width half the data span, centred on the data:
    /// `α = 1 / (2 (span/2)²)`, `c = midpoint`.
    pub fn default_for(data: &TimeSeries) -> Self {
        let half = 0.5 * data.span();
        let alpha = if half > 0.0 { 1.0 / (2.0 * half * half) } else { 1.0 };
        log::info!("default window: alpha = {alpha:.6e}, centre = {}", data.midpoint());
        Self {
            alpha,
            centre: data.midpoint(),
        }
    }

    /// `1 / sqrt(2α)`
    pub fn width(&self) -> f64 {
        1.0 / (2.0 * self.alpha).sqrt()
    }
}

/// `ν = N / (2 span)` split into 1000 points on `[0, ν]`.
pub fn default_grid(data: &TimeSeries) -> Vec<f64> {
    linspace(0.0, data.nyquist_like(), 1000)
}

/// Per-component constants of the exact SM cross-covariance:
/// `α̃ = α/π²`, `γ̃_q = γ_q/π²`, `L_q = (α̃⁻¹ + γ̃_q⁻¹)⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmSpectralTerms {
    pub alpha_tilde: f64,
    pub gamma_tilde: Vec<f64>,
    pub l: Vec<f64>,
}

impl SmSpectralTerms {
    pub fn new(kernel: &SmKernel, window: &WindowConfig) -> Self {
        let alpha_tilde = window.alpha / (PI * PI);
        let gamma_tilde: Vec<f64> = kernel.components.iter().map(|c| c.gamma / (PI * PI)).collect();
        let l = gamma_tilde
            .iter()
            .map(|g| 1.0 / (1.0 / alpha_tilde + 1.0 / g))
            .collect();
        Self {
            alpha_tilde,
            gamma_tilde,
            l,
        }
    }
}

/// Exact prior covariance `K_F(ξ, ξ') = E[F_c(ξ) F_c*(ξ')]` for an SM kernel.
pub fn prior_cov_exact_sm(kernel: &SmKernel, window: &WindowConfig, xi: f64, xi_prime: f64) -> f64 {
    let a = window.alpha;
    let diff = (-PI * PI * (xi - xi_prime).powi(2) / (2.0 * a)).exp();
    let mid = 0.5 * (xi + xi_prime);
    kernel
        .components
        .iter()
        .map(|c| {
            let s = a + 2.0 * c.gamma;
            let scale = c.sigma2 * PI / (2.0 * (a * s).sqrt());
            let lobe = |theta: f64| (-2.0 * PI * PI * (mid - theta).powi(2) / s).exp();
            scale * (lobe(c.theta) + lobe(-c.theta))
        })
        .sum::<f64>()
        * diff
}

/// Whether the delta approximation is within its validity range:
/// `sqrt(α)/π <= 0.1 ×` the kernel's frequency scale.
pub fn approximation_valid(kernel: &dyn StationaryKernel, window: &WindowConfig) -> bool {
    window.alpha.sqrt() / PI <= 0.1 * kernel.frequency_scale()
}

fn warn_if_invalid(kernel: &dyn StationaryKernel, window: &WindowConfig) {
    if !approximation_valid(kernel, window) {
        log::warn!(
            "window alpha = {:.3e} is too large for the delta approximation (kernel frequency scale {:.3e})",
            window.alpha,
            kernel.frequency_scale()
        );
    }
}

fn prior_cov_delta(kernel: &dyn StationaryKernel, window: &WindowConfig, xi: f64, xi_prime: f64) -> f64 {
    let a = window.alpha;
    (PI / (2.0 * a)).sqrt()
        * (-PI * PI * (xi - xi_prime).powi(2) / (2.0 * a)).exp()
        * kernel.spectral_density(0.5 * (xi + xi_prime))
}

/// Wide-window approximation
/// `K_F(ξ, ξ') ≈ sqrt(π/(2α)) exp(-π²(ξ-ξ')²/(2α)) 𝒦((ξ+ξ')/2)`.
/// Logs a warning outside the validity range.
pub fn prior_cov_approx(kernel: &dyn StationaryKernel, window: &WindowConfig, xi: f64, xi_prime: f64) -> f64 {
    warn_if_invalid(kernel, window);
    prior_cov_delta(kernel, window, xi, xi_prime)
}

/// Pseudocovariance `P_F(ξ, ξ') = E[F_c(ξ) F_c(ξ')] = K_F(ξ, -ξ')` for a real signal.
pub fn pseudo_cov(prior_cov: impl Fn(f64, f64) -> f64, xi: f64, xi_prime: f64) -> f64 {
    prior_cov(xi, -xi_prime)
}

/// Prior covariances of the real and imaginary parts, `(K_rr, K_ii)`.
/// The prior cross-covariance `K_ri` is identically zero.
pub fn real_imag_covs(prior_cov: impl Fn(f64, f64) -> f64, xi: f64, xi_prime: f64) -> (f64, f64) {
    let k = prior_cov(xi, xi_prime);
    let p = prior_cov(xi, -xi_prime);
    (0.5 * (k + p), 0.5 * (k - p))
}

/// Exact cross-covariance `E[F_c(ξ) y(t)]` for an SM kernel, `t` in absolute time.
///
/// Per component and per `θ = ±θ_q`:
/// `σ²_q / (2 sqrt(π(α̃+γ̃_q))) · exp(-(ξ-θ)²/(α̃+γ̃_q)) · exp(-π² L_q τ²)
///  · exp(-j 2π τ L_q (θ/γ̃_q + ξ/α̃))`, with `τ = t - c`.
pub fn cross_cov_exact_sm(kernel: &SmKernel, window: &WindowConfig, t: f64, xi: f64) -> Complex64 {
    let terms = SmSpectralTerms::new(kernel, window);
    cross_cov_sm_terms(kernel, &terms, t - window.centre, xi)
}

fn cross_cov_sm_terms(kernel: &SmKernel, terms: &SmSpectralTerms, tau: f64, xi: f64) -> Complex64 {
    let at = terms.alpha_tilde;
    let mut acc = Complex64::new(0.0, 0.0);
    for (q, c) in kernel.components.iter().enumerate() {
        let gt = terms.gamma_tilde[q];
        let l = terms.l[q];
        let sum = at + gt;
        let scale = c.sigma2 / (2.0 * (PI * sum).sqrt()) * (-PI * PI * l * tau * tau).exp();
        for theta in [c.theta, -c.theta] {
            let mag = scale * (-(xi - theta).powi(2) / sum).exp();
            let phase = -2.0 * PI * tau * l * (theta / gt + xi / at);
            acc += Complex64::from_polar(mag, phase);
        }
    }
    acc
}

fn cross_cov_delta(kernel: &dyn StationaryKernel, tau: f64, xi: f64) -> Complex64 {
    Complex64::from_polar(kernel.spectral_density(xi), -2.0 * PI * xi * tau)
}

/// Wide-window approximation `E[F_c(ξ) y(t)] ≈ 𝒦(ξ) exp(-j 2π ξ (t - c))`.
pub fn cross_cov_approx(kernel: &dyn StationaryKernel, window: &WindowConfig, t: f64, xi: f64) -> Complex64 {
    warn_if_invalid(kernel, window);
    cross_cov_delta(kernel, t - window.centre, xi)
}

/// The consistency limit `Σ_i exp(-j 2π ξ t_i) y_i`.
pub fn dtft_limit_mean(data: &TimeSeries, xi: f64) -> Complex64 {
    data.times()
        .iter()
        .zip(data.values())
        .map(|(&t, &y)| Complex64::from_polar(y, -2.0 * PI * xi * t))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumMode {
    ExactSm,
    DeltaApproximation,
}

/// Posterior covariances between the real/imaginary parts at `ξ` and `ξ'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorCov {
    pub rr: f64,
    pub ii: f64,
    /// `cov(Re F(ξ), Im F(ξ'))`. Zero a priori, generally not a posteriori.
    pub ri: f64,
}

/// Pointwise posterior summary at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointPosterior {
    pub mean_re: f64,
    pub mean_im: f64,
    pub var_re: f64,
    pub var_im: f64,
    pub cov_ri: f64,
}

impl PointPosterior {
    /// `E|F|² = m_r² + m_i² + v_r + v_i`
    pub fn psd_mean(&self) -> f64 {
        self.mean_re.powi(2) + self.mean_im.powi(2) + self.var_re + self.var_im
    }

    /// Standard deviation of `Re² + Im²` for the correlated Gaussian pair.
    pub fn psd_std(&self) -> f64 {
        let (mr, mi, vr, vi, c) = (self.mean_re, self.mean_im, self.var_re, self.var_im, self.cov_ri);
        let var = 2.0 * vr * vr
            + 4.0 * mr * mr * vr
            + 2.0 * vi * vi
            + 4.0 * mi * mi * vi
            + 2.0 * (2.0 * c * c + 4.0 * mr * mi * c);
        var.max(0.0).sqrt()
    }
}

/// Relative tolerance below zero for posterior variances before it is an error.
pub const NEGATIVE_VARIANCE_TOL: f64 = 1e-10;

/// Posterior law of the local spectrum given observations.
///
/// Immutable after construction. Several windows (centres) can share one
/// `TrainedGp` and hence one Gram factorization.
#[derive(Debug)]
pub struct SpectrumPosterior {
    source: Option<Arc<TrainedGp>>,
    kernel: Kernel,
    window: WindowConfig,
    mode: SpectrumMode,
    sm_terms: Option<SmSpectralTerms>,
    clamped: AtomicUsize,
}

/// Builds the posterior, exact for SM kernels and approximate otherwise.
pub fn posterior(trained: &Arc<TrainedGp>, window: WindowConfig) -> Result<SpectrumPosterior> {
    SpectrumPosterior::new(Arc::clone(trained), window, None)
}

impl SpectrumPosterior {
    /// `mode = None` picks the exact path whenever the kernel supports it.
    pub fn new(trained: Arc<TrainedGp>, window: WindowConfig, mode: Option<SpectrumMode>) -> Result<Self> {
        let kernel = trained.kernel().clone();
        Self::build(Some(trained), kernel, window, mode)
    }

    /// The posterior given no observations, i.e. the prior.
    pub fn prior(kernel: Kernel, window: WindowConfig, mode: Option<SpectrumMode>) -> Result<Self> {
        Self::build(None, kernel, window, mode)
    }

    fn build(
        source: Option<Arc<TrainedGp>>,
        kernel: Kernel,
        window: WindowConfig,
        mode: Option<SpectrumMode>,
    ) -> Result<Self> {
        let window = WindowConfig::new(window.alpha, window.centre)?;
        let mode = match mode {
            Some(SpectrumMode::ExactSm) if kernel.as_sm().is_none() => {
                return Err(BnseError::InvalidInput(
                    "the exact local-spectrum path requires a spectral-mixture kernel".into(),
                ))
            }
            Some(m) => m,
            None if kernel.supports_exact_spectrum() => SpectrumMode::ExactSm,
            None => SpectrumMode::DeltaApproximation,
        };
        if mode == SpectrumMode::DeltaApproximation {
            warn_if_invalid(&kernel, &window);
        }
        let sm_terms = match (mode, kernel.as_sm()) {
            (SpectrumMode::ExactSm, Some(sm)) => Some(SmSpectralTerms::new(sm, &window)),
            _ => None,
        };
        Ok(Self {
            source,
            kernel,
            window,
            mode,
            sm_terms,
            clamped: AtomicUsize::new(0),
        })
    }

    /// Same observations and factorization, different window.
    pub fn with_window(&self, window: WindowConfig) -> Result<Self> {
        Self::build(self.source.clone(), self.kernel.clone(), window, Some(self.mode))
    }

    pub fn mode(&self) -> SpectrumMode {
        self.mode
    }

    pub fn window(&self) -> &WindowConfig {
        &self.window
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn source(&self) -> Option<&Arc<TrainedGp>> {
        self.source.as_ref()
    }

    /// Number of slightly negative variances clamped to zero so far.
    pub fn clamped_count(&self) -> usize {
        self.clamped.load(Ordering::Relaxed)
    }

    /// Prior `K_F(ξ, ξ')`.
    pub fn prior_cov(&self, xi: f64, xi_prime: f64) -> f64 {
        match (self.mode, self.kernel.as_sm()) {
            (SpectrumMode::ExactSm, Some(sm)) => prior_cov_exact_sm(sm, &self.window, xi, xi_prime),
            _ => prior_cov_delta(&self.kernel, &self.window, xi, xi_prime),
        }
    }

    pub fn prior_real_imag(&self, xi: f64, xi_prime: f64) -> (f64, f64) {
        real_imag_covs(|a, b| self.prior_cov(a, b), xi, xi_prime)
    }

    /// `E[F_c(ξ) y(t)]`, `t` in absolute time.
    pub fn cross_cov(&self, t: f64, xi: f64) -> Complex64 {
        let tau = t - self.window.centre;
        match (&self.sm_terms, self.kernel.as_sm()) {
            (Some(terms), Some(sm)) => cross_cov_sm_terms(sm, terms, tau, xi),
            _ => cross_cov_delta(&self.kernel, tau, xi),
        }
    }

    /// Real and imaginary parts of `[E[F_c(ξ_j) y(t_i)]]` as N×M matrices.
    fn cross_matrices(&self, grid: &[f64]) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        let src = self.source.as_ref()?;
        let t = src.data().times();
        let mut re = DMatrix::zeros(t.len(), grid.len());
        let mut im = DMatrix::zeros(t.len(), grid.len());
        for (j, &xi) in grid.iter().enumerate() {
            for (i, &ti) in t.iter().enumerate() {
                let k = self.cross_cov(ti, xi);
                re[(i, j)] = k.re;
                im[(i, j)] = k.im;
            }
        }
        Some((re, im))
    }

    /// Posterior mean `(E[Re F(ξ) | y], E[Im F(ξ) | y])`, linear cost in N.
    pub fn mean(&self, xi: f64) -> (f64, f64) {
        let Some(src) = &self.source else {
            return (0.0, 0.0);
        };
        src.data()
            .times()
            .iter()
            .zip(src.weights().iter())
            .fold((0.0, 0.0), |(re, im), (&t, &w)| {
                let k = self.cross_cov(t, xi);
                (re + k.re * w, im + k.im * w)
            })
    }

    /// Posterior covariances between `(Re, Im) F(ξ)` and `(Re, Im) F(ξ')`.
    pub fn cov(&self, xi: f64, xi_prime: f64) -> PosteriorCov {
        let (krr, kii) = self.prior_real_imag(xi, xi_prime);
        let Some(src) = &self.source else {
            return PosteriorCov {
                rr: krr,
                ii: kii,
                ri: 0.0,
            };
        };
        let (re, im) = self.cross_matrices(&[xi, xi_prime]).expect("source present");
        let chol = &src.gram().chol;
        let vr = chol.l().solve_lower_triangular(&re).expect("nonsingular factor");
        let vi = chol.l().solve_lower_triangular(&im).expect("nonsingular factor");
        PosteriorCov {
            rr: krr - vr.column(0).dot(&vr.column(1)),
            ii: kii - vi.column(0).dot(&vi.column(1)),
            ri: -vr.column(0).dot(&vi.column(1)),
        }
    }

    fn clamp_variance(&self, xi: f64, value: f64, prior_total: f64) -> Result<f64> {
        if value >= 0.0 {
            return Ok(value);
        }
        if value >= -NEGATIVE_VARIANCE_TOL * prior_total.abs() {
            self.clamped.fetch_add(1, Ordering::Relaxed);
            return Ok(0.0);
        }
        Err(BnseError::NegativeVariance {
            xi,
            value,
            prior: prior_total,
        })
    }

    /// Means, variances and Re/Im covariance on a grid, O(N² M) after the
    /// one-time factorization.
    pub fn pointwise(&self, grid: &[f64]) -> Result<Vec<PointPosterior>> {
        let priors: Vec<(f64, f64, f64)> = grid
            .iter()
            .map(|&xi| {
                let (krr, kii) = self.prior_real_imag(xi, xi);
                (krr, kii, self.prior_cov(xi, xi))
            })
            .collect();
        let Some(src) = &self.source else {
            return Ok(priors
                .into_iter()
                .map(|(krr, kii, _)| PointPosterior {
                    mean_re: 0.0,
                    mean_im: 0.0,
                    var_re: krr,
                    var_im: kii,
                    cov_ri: 0.0,
                })
                .collect());
        };
        let (re, im) = self.cross_matrices(grid).expect("source present");
        let w = src.weights();
        let mean_re = re.tr_mul(w);
        let mean_im = im.tr_mul(w);
        let l = src.gram().chol.l();
        let vr = l.solve_lower_triangular(&re).expect("nonsingular factor");
        let vi = l.solve_lower_triangular(&im).expect("nonsingular factor");
        grid.iter()
            .enumerate()
            .map(|(j, &xi)| {
                let (krr, kii, total) = priors[j];
                let var_re = self.clamp_variance(xi, krr - vr.column(j).norm_squared(), total)?;
                let var_im = self.clamp_variance(xi, kii - vi.column(j).norm_squared(), total)?;
                Ok(PointPosterior {
                    mean_re: mean_re[j],
                    mean_im: mean_im[j],
                    var_re,
                    var_im,
                    cov_ri: -vr.column(j).dot(&vi.column(j)),
                })
            })
            .collect()
    }

    pub fn point(&self, xi: f64) -> Result<PointPosterior> {
        Ok(self.pointwise(&[xi])?[0])
    }

    /// Closed-form posterior mean of the PSD `|F_c(ξ)|²`.
    pub fn psd_mean(&self, xi: f64) -> Result<f64> {
        self.point(xi).map(|p| p.psd_mean())
    }

    /// Evaluates the posterior on a grid in the common estimate format.
    pub fn evaluate(&self, grid: &[f64]) -> Result<SpectrumEstimate> {
        let pts = self.pointwise(grid)?;
        Ok(SpectrumEstimate {
            method: Method::Bnse,
            grid: grid.to_vec(),
            mean_re: pts.iter().map(|p| p.mean_re).collect(),
            mean_im: pts.iter().map(|p| p.mean_im).collect(),
            var_re: pts.iter().map(|p| p.var_re).collect(),
            var_im: pts.iter().map(|p| p.var_im).collect(),
            psd_mean: pts.iter().map(PointPosterior::psd_mean).collect(),
            psd_std: pts.iter().map(PointPosterior::psd_std).collect(),
        })
    }

    /// Joint posterior mean and covariance of `[Re F(grid); Im F(grid)]`.
    pub fn joint_moments(&self, grid: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let m = grid.len();
        let mut cov = DMatrix::zeros(2 * m, 2 * m);
        for i in 0..m {
            for j in 0..=i {
                let (krr, kii) = self.prior_real_imag(grid[i], grid[j]);
                cov[(i, j)] = krr;
                cov[(j, i)] = krr;
                cov[(m + i, m + j)] = kii;
                cov[(m + j, m + i)] = kii;
            }
        }
        let mut mean = DVector::zeros(2 * m);
        if let Some(src) = &self.source {
            let (re, im) = self.cross_matrices(grid).expect("source present");
            let w = src.weights();
            mean.rows_mut(0, m).copy_from(&re.tr_mul(w));
            mean.rows_mut(m, m).copy_from(&im.tr_mul(w));
            let l = src.gram().chol.l();
            let mut v = DMatrix::zeros(re.nrows(), 2 * m);
            v.columns_mut(0, m).copy_from(&re);
            v.columns_mut(m, m).copy_from(&im);
            let v = l.solve_lower_triangular(&v).expect("nonsingular factor");
            cov -= v.tr_mul(&v);
        }
        (mean, cov)
    }

    /// Joint posterior draws of the real and imaginary parts on `grid`,
    /// returned as `(re, im)`, each `n_samples × M`.
    pub fn sample_spectrum(&self, grid: &[f64], n_samples: usize, seed: u64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let m = grid.len();
        if n_samples == 0 || m == 0 {
            return Ok((DMatrix::zeros(n_samples, m), DMatrix::zeros(n_samples, m)));
        }
        let (mean, cov) = self.joint_moments(grid);
        let what = format!(
            "posterior spectrum covariance on grid [{}, {}] ({m} points)",
            grid[0],
            grid[m - 1]
        );
        let chol = cholesky_with_jitter(&cov, mean_diagonal(&cov), &what)?;
        let l = chol.factor.l();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = DMatrix::from_fn(2 * m, n_samples, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut draws = l * z;
        for mut col in draws.column_iter_mut() {
            col += &mean;
        }
        let draws = draws.transpose();
        Ok((draws.columns(0, m).into_owned(), draws.columns(m, m).into_owned()))
    }

    /// Posterior PSD draws `Re² + Im²` on `grid`, one row per draw.
    pub fn sample_psd(&self, grid: &[f64], n_samples: usize, seed: u64) -> Result<DMatrix<f64>> {
        let (re, im) = self.sample_spectrum(grid, n_samples, seed)?;
        Ok(re.component_mul(&re) + im.component_mul(&im))
    }
}
