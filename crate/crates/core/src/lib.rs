//! Bayesian nonparametric spectral estimation.
//!
//! A stationary Gaussian-process prior over a signal induces a Gaussian
//! prior over its windowed ("local") Fourier spectrum. Conditioning on
//! noisy, possibly unevenly sampled observations yields the exact posterior
//! of the spectrum, whose power spectral density has a closed-form mean
//! that can be maximized to locate periodicities.
//!
//! * [`kernels`]: stationary kernels and their spectral densities
//! * [`gp`]: time series, marginal likelihood, training, prior sampling
//! * [`spectrum`]: local-spectrum prior/posterior and PSD statistics
//! * [`baselines`]: Lomb-Scargle, periodogram and MUSIC
//! * [`optim`]: Powell minimization and PSD peak search

pub mod baselines;
pub mod datasets;
pub mod error;
pub mod gp;
pub mod kernels;
pub mod linalg;
pub mod optim;
pub mod spectrum;

pub use error::{BnseError, Result};
pub use gp::{TimeSeries, TrainedGp};
pub use kernels::{Kernel, ModelSpec, NoiseModel, SmComponent, SmKernel, StationaryKernel};
pub use spectrum::{SpectrumEstimate, SpectrumPosterior, WindowConfig};
