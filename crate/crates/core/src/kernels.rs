//! Stationary covariance kernels with closed-form spectral densities.
//!
//! Frequencies are in cycles per unit time and the Fourier convention is
//! `F(xi) = ∫ f(t) exp(-j 2π xi t) dt`, so a kernel integrates its spectral
//! density to its value at lag zero.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{BnseError, Result};
use crate::linalg::{cholesky_with_jitter, JitteredCholesky};

/// A stationary covariance `K(t, t') = K(t - t')` with known spectral density.
pub trait StationaryKernel: Send + Sync + std::fmt::Debug {
    /// Covariance at lag `tau`.
    fn eval(&self, tau: f64) -> f64;

    /// Fourier transform of `eval`, evaluated at frequency `xi`.
    fn spectral_density(&self, xi: f64) -> f64;

    /// Whether the local-spectrum statistics have an exact closed form.
    fn supports_exact_spectrum(&self) -> bool {
        false
    }

    /// Smallest frequency scale over which the spectral density changes.
    /// Drives the validity check of the delta approximation.
    fn frequency_scale(&self) -> f64;

    fn variance(&self) -> f64 {
        self.eval(0.0)
    }
}

/// One Gaussian-modulated cosine of a spectral mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmComponent {
    /// Weight (variance contribution).
    pub sigma2: f64,
    /// Rate, in inverse squared time.
    pub gamma: f64,
    /// Centre frequency, in cycles per unit time.
    pub theta: f64,
}

impl SmComponent {
    pub fn new(sigma2: f64, gamma: f64, theta: f64) -> Self {
        Self { sigma2, gamma, theta }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.sigma2.is_finite()
            && self.sigma2 > 0.0
            && self.gamma.is_finite()
            && self.gamma > 0.0
            && self.theta.is_finite()
            && self.theta >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(BnseError::InvalidInput(format!(
                "spectral-mixture component needs sigma2 > 0, gamma > 0, theta >= 0; got {self:?}"
            )))
        }
    }
}

/// Spectral-mixture kernel: `Σ_q σ²_q exp(-γ_q τ²) cos(2π θ_q τ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmKernel {
    pub components: Vec<SmComponent>,
}

impl SmKernel {
    pub fn new(components: Vec<SmComponent>) -> Result<Self> {
        let k = Self { components };
        k.validate()?;
        Ok(k)
    }

    /// Squared-exponential kernel `σ² exp(-τ²/(2ℓ²))`, the `θ = 0` member of the family.
    pub fn squared_exponential(sigma2: f64, lengthscale: f64) -> Result<Self> {
        Self::new(vec![SmComponent::new(
            sigma2,
            1.0 / (2.0 * lengthscale * lengthscale),
            0.0,
        )])
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(BnseError::InvalidInput(
                "spectral-mixture kernel needs at least one component".into(),
            ));
        }
        self.components.iter().try_for_each(SmComponent::validate)
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

impl StationaryKernel for SmKernel {
    fn eval(&self, tau: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.sigma2 * (-c.gamma * tau * tau).exp() * (2.0 * PI * c.theta * tau).cos())
            .sum()
    }

    fn spectral_density(&self, xi: f64) -> f64 {
        self.components
            .iter()
            .map(|c| {
                let scale = 0.5 * c.sigma2 * (PI / c.gamma).sqrt();
                let lobe = |centre: f64| (-PI * PI * (xi - centre).powi(2) / c.gamma).exp();
                scale * (lobe(c.theta) + lobe(-c.theta))
            })
            .sum()
    }

    fn supports_exact_spectrum(&self) -> bool {
        true
    }

    fn frequency_scale(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.gamma.sqrt() / PI)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Smoothness orders of the Matérn family with elementary closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaternOrder {
    /// ν = 1/2, the Laplace (exponential) kernel.
    Half,
    ThreeHalves,
    FiveHalves,
}

impl MaternOrder {
    pub fn nu(self) -> f64 {
        match self {
            MaternOrder::Half => 0.5,
            MaternOrder::ThreeHalves => 1.5,
            MaternOrder::FiveHalves => 2.5,
        }
    }

    /// Γ(ν + 1/2) / Γ(ν)
    fn gamma_ratio(self) -> f64 {
        match self {
            MaternOrder::Half => 1.0 / PI.sqrt(),
            MaternOrder::ThreeHalves => 2.0 / PI.sqrt(),
            MaternOrder::FiveHalves => 8.0 / (3.0 * PI.sqrt()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Matern {
    pub order: MaternOrder,
    pub sigma2: f64,
    pub lengthscale: f64,
}

impl Matern {
    pub fn new(order: MaternOrder, sigma2: f64, lengthscale: f64) -> Result<Self> {
        let k = Self {
            order,
            sigma2,
            lengthscale,
        };
        k.validate()?;
        Ok(k)
    }

    /// The Laplace kernel `σ² exp(-|τ|/ℓ)`.
    pub fn laplace(sigma2: f64, lengthscale: f64) -> Result<Self> {
        Self::new(MaternOrder::Half, sigma2, lengthscale)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma2 > 0.0 && self.lengthscale > 0.0 && self.sigma2.is_finite() && self.lengthscale.is_finite() {
            Ok(())
        } else {
            Err(BnseError::InvalidInput(format!(
                "Matérn kernel needs sigma2 > 0 and lengthscale > 0; got {self:?}"
            )))
        }
    }
}

impl StationaryKernel for Matern {
    fn eval(&self, tau: f64) -> f64 {
        let r = tau.abs() / self.lengthscale;
        let poly_exp = match self.order {
            MaternOrder::Half => (-r).exp(),
            MaternOrder::ThreeHalves => {
                let s = 3f64.sqrt() * r;
                (1.0 + s) * (-s).exp()
            }
            MaternOrder::FiveHalves => {
                let s = 5f64.sqrt() * r;
                (1.0 + s + s * s / 3.0) * (-s).exp()
            }
        };
        self.sigma2 * poly_exp
    }

    fn spectral_density(&self, xi: f64) -> f64 {
        let nu = self.order.nu();
        let l2 = self.lengthscale * self.lengthscale;
        let base = 2.0 * nu / l2;
        self.sigma2
            * 2.0
            * PI.sqrt()
            * self.order.gamma_ratio()
            * base.powf(nu)
            * (base + 4.0 * PI * PI * xi * xi).powf(-(nu + 0.5))
    }

    fn frequency_scale(&self) -> f64 {
        (2.0 * self.order.nu()).sqrt() / (2.0 * PI * self.lengthscale)
    }
}

/// Band-limited kernel `σ² sinc(2Bτ)` with a flat spectral density on `[-B, B]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sinc {
    pub sigma2: f64,
    pub bandwidth: f64,
}

impl Sinc {
    pub fn new(sigma2: f64, bandwidth: f64) -> Result<Self> {
        if sigma2 > 0.0 && bandwidth > 0.0 && sigma2.is_finite() && bandwidth.is_finite() {
            Ok(Self { sigma2, bandwidth })
        } else {
            Err(BnseError::InvalidInput(format!(
                "sinc kernel needs sigma2 > 0 and bandwidth > 0; got ({sigma2}, {bandwidth})"
            )))
        }
    }
}

impl StationaryKernel for Sinc {
    fn eval(&self, tau: f64) -> f64 {
        let x = 2.0 * self.bandwidth * tau;
        if x.abs() < 1e-12 {
            self.sigma2
        } else {
            self.sigma2 * (PI * x).sin() / (PI * x)
        }
    }

    fn spectral_density(&self, xi: f64) -> f64 {
        if xi.abs() <= self.bandwidth {
            self.sigma2 / (2.0 * self.bandwidth)
        } else {
            0.0
        }
    }

    // The density is discontinuous; the band edge is the only scale it has.
    fn frequency_scale(&self) -> f64 {
        self.bandwidth
    }
}

/// White-noise kernel: `K(τ) = σ² 1{τ = 0}` with flat spectral density `σ²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WhiteNoise {
    pub sigma2: f64,
}

impl StationaryKernel for WhiteNoise {
    fn eval(&self, tau: f64) -> f64 {
        if tau == 0.0 {
            self.sigma2
        } else {
            0.0
        }
    }

    fn spectral_density(&self, _xi: f64) -> f64 {
        self.sigma2
    }

    fn frequency_scale(&self) -> f64 {
        f64::INFINITY
    }
}

/// Any kernel the library ships, tagged for serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    Sm(SmKernel),
    Matern(Matern),
    Sinc(Sinc),
    White(WhiteNoise),
}

impl Kernel {
    pub fn as_sm(&self) -> Option<&SmKernel> {
        match self {
            Kernel::Sm(k) => Some(k),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Kernel::Sm(k) => k.validate(),
            Kernel::Matern(k) => k.validate(),
            Kernel::Sinc(k) => Sinc::new(k.sigma2, k.bandwidth).map(|_| ()),
            Kernel::White(k) if k.sigma2 >= 0.0 && k.sigma2.is_finite() => Ok(()),
            Kernel::White(k) => Err(BnseError::InvalidInput(format!(
                "white-noise kernel needs sigma2 >= 0; got {}",
                k.sigma2
            ))),
        }
    }

    fn inner(&self) -> &dyn StationaryKernel {
        match self {
            Kernel::Sm(k) => k,
            Kernel::Matern(k) => k,
            Kernel::Sinc(k) => k,
            Kernel::White(k) => k,
        }
    }
}

impl From<SmKernel> for Kernel {
    fn from(k: SmKernel) -> Self {
        Kernel::Sm(k)
    }
}

impl From<Matern> for Kernel {
    fn from(k: Matern) -> Self {
        Kernel::Matern(k)
    }
}

impl From<Sinc> for Kernel {
    fn from(k: Sinc) -> Self {
        Kernel::Sinc(k)
    }
}

impl From<WhiteNoise> for Kernel {
    fn from(k: WhiteNoise) -> Self {
        Kernel::White(k)
    }
}

impl StationaryKernel for Kernel {
    fn eval(&self, tau: f64) -> f64 {
        self.inner().eval(tau)
    }

    fn spectral_density(&self, xi: f64) -> f64 {
        self.inner().spectral_density(xi)
    }

    fn supports_exact_spectrum(&self) -> bool {
        self.inner().supports_exact_spectrum()
    }

    fn frequency_scale(&self) -> f64 {
        self.inner().frequency_scale()
    }
}

/// Observation noise `η_i ~ N(0, σ_n²)`. Enters the Gram diagonal only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma2: f64,
}

impl NoiseModel {
    pub fn new(sigma2: f64) -> Result<Self> {
        if sigma2 >= 0.0 && sigma2.is_finite() {
            Ok(Self { sigma2 })
        } else {
            Err(BnseError::InvalidInput(format!(
                "noise variance must be >= 0, got {sigma2}"
            )))
        }
    }
}

/// Kernel plus noise, as exchanged in JSON:
/// `{"type":"sm","components":[{"sigma2":..,"gamma":..,"theta":..}],"noise_sigma2":..}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub kernel: Kernel,
    pub noise_sigma2: f64,
}

impl ModelSpec {
    pub fn new(kernel: impl Into<Kernel>, noise: NoiseModel) -> Self {
        Self {
            kernel: kernel.into(),
            noise_sigma2: noise.sigma2,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(s)?;
        spec.kernel.validate()?;
        NoiseModel::new(spec.noise_sigma2)?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model spec is always serializable")
    }

    pub fn noise(&self) -> NoiseModel {
        NoiseModel {
            sigma2: self.noise_sigma2,
        }
    }
}

/// Noise-free kernel matrix `[K(a_i - b_j)]`.
pub fn cross_gram(kernel: &dyn StationaryKernel, a: &[f64], b: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| kernel.eval(a[i] - b[j]))
}

/// Factorized Gram matrix of the observations.
#[derive(Debug, Clone)]
pub struct Gram {
    /// `K(t, t) + (σ_n² + jitter) I`.
    pub matrix: DMatrix<f64>,
    pub chol: Cholesky<f64, Dyn>,
    pub jitter: f64,
}

/// Builds and factorizes `K(t_i - t_j) + (σ_n² + jitter) 1{i=j}`.
///
/// Jitter starts at `1e-10 K(0)` and escalates by 10x up to `1e-4 K(0)`;
/// failure beyond that signals degenerate hyperparameters.
pub fn kernel_gram(kernel: &dyn StationaryKernel, noise: NoiseModel, times: &[f64]) -> Result<Gram> {
    if times.is_empty() {
        return Err(BnseError::InvalidInput("Gram matrix needs at least one time".into()));
    }
    let mut matrix = cross_gram(kernel, times, times);
    for i in 0..times.len() {
        matrix[(i, i)] += noise.sigma2;
    }
    let k0 = kernel.variance();
    let scale = if k0 > 0.0 { k0 } else { noise.sigma2.max(1.0) };
    let JitteredCholesky { factor, jitter } = cholesky_with_jitter(&matrix, scale, "Gram")?;
    for i in 0..times.len() {
        matrix[(i, i)] += jitter;
    }
    Ok(Gram {
        matrix,
        chol: factor,
        jitter,
    })
}
