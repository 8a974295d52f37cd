//! Windowed-DFT Monte-Carlo oracle, written without the library's kernel,
//! Gram or spectrum code.

#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// `(σ², γ, θ)` per component.
pub type Sm = Vec<(f64, f64, f64)>;

pub fn sm_cov(tau: f64, comps: &Sm) -> f64 {
    comps
        .iter()
        .map(|&(s, g, th)| s * (-g * tau * tau).exp() * (2.0 * PI * th * tau).cos())
        .sum()
}

/// Fine-grid draws of a zero-mean GP with SM covariance, plus a tiny nugget
/// for factorizability. One row per path.
pub struct PathEnsemble {
    pub times: Vec<f64>,
    pub dt: f64,
    pub paths: DMatrix<f64>,
}

impl PathEnsemble {
    pub fn sample(comps: &Sm, lo: f64, hi: f64, n_times: usize, n_paths: usize, seed: u64) -> Self {
        let dt = (hi - lo) / (n_times - 1) as f64;
        let times: Vec<f64> = (0..n_times).map(|i| lo + dt * i as f64).collect();
        let var0 = sm_cov(0.0, comps);
        let k = DMatrix::from_fn(n_times, n_times, |i, j| {
            sm_cov(times[i] - times[j], comps) + if i == j { 1e-9 * var0 } else { 0.0 }
        });
        let l = k.cholesky().expect("oracle covariance factorizes").unpack();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = DMatrix::from_fn(n_times, n_paths, |_, _| rng.sample::<f64, _>(StandardNormal));
        Self {
            times,
            dt,
            paths: (l * z).transpose(),
        }
    }

    pub fn n_paths(&self) -> usize {
        self.paths.nrows()
    }

    /// Riemann sum of `f(t) exp(-α(t-c)²) exp(-j2πξ(t-c))` for every path.
    pub fn windowed_dft(&self, alpha: f64, centre: f64, xi: f64) -> Vec<Complex64> {
        let w: DVector<Complex64> = DVector::from_iterator(
            self.times.len(),
            self.times.iter().map(|&t| {
                let u = t - centre;
                Complex64::from_polar((-alpha * u * u).exp() * self.dt, -2.0 * PI * xi * u)
            }),
        );
        self.paths
            .row_iter()
            .map(|row| row.iter().zip(w.iter()).map(|(f, wi)| wi * f).sum())
            .collect()
    }

    pub fn index_of(&self, t: f64) -> usize {
        ((t - self.times[0]) / self.dt).round() as usize
    }
}

/// `E[F(ξ) F*(ξ')]` estimated from paired transforms.
pub fn empirical_cov(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum::<Complex64>() / a.len() as f64
}

/// `E[F(ξ) y(t)]` estimated from transforms and path values.
pub fn empirical_cross(f: &[Complex64], y: impl Iterator<Item = f64>) -> Complex64 {
    let n = f.len() as f64;
    f.iter().zip(y).map(|(a, b)| a * b).sum::<Complex64>() / n
}

/// Best linear predictor of complex targets from real regressors, fitted on
/// the ensemble: `E[F | y] ≈ Σ_yF^T Σ_yy^{-1} y`. Rows of `y` are paths.
pub fn regression_mean(y: &DMatrix<f64>, f: &[Complex64], y_obs: &DVector<f64>) -> Complex64 {
    let n = y.nrows() as f64;
    let syy = y.tr_mul(y) / n;
    let f_re = DVector::from_iterator(f.len(), f.iter().map(|c| c.re));
    let f_im = DVector::from_iterator(f.len(), f.iter().map(|c| c.im));
    let syf_re = y.tr_mul(&f_re) / n;
    let syf_im = y.tr_mul(&f_im) / n;
    let chol = syy.cholesky().expect("empirical observation covariance factorizes");
    let b_re = chol.solve(&syf_re);
    let b_im = chol.solve(&syf_im);
    Complex64::new(b_re.dot(y_obs), b_im.dot(y_obs))
}

/// Relative error `|a - b| / |b|`.
pub fn rel_err(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm()
}

/// Setup shared by the oracle checks: one modulated SM component, a window
/// well inside the sampled interval and an off-origin centre.
pub struct OracleSetup {
    pub comps: Sm,
    pub alpha: f64,
    pub centre: f64,
    pub ensemble: PathEnsemble,
}

pub const ORACLE_PATHS: usize = 10_000;

impl OracleSetup {
    pub fn new(seed: u64) -> Self {
        let comps = vec![(1.0, 2.0, 1.0)];
        let alpha = 1.0;
        let centre = 0.26;
        let ensemble = PathEnsemble::sample(&comps, -4.0, 4.5, 426, ORACLE_PATHS, seed);
        Self {
            comps,
            alpha,
            centre,
            ensemble,
        }
    }
}

/// Relative errors of the closed forms against the oracle, each measured at
/// (or relative to) the peak magnitude of the quantity.
#[derive(Debug, Clone, Copy)]
pub struct OracleErrors {
    pub prior_cov: f64,
    pub pseudo_cov: f64,
    pub cross_cov: f64,
    /// Away from the window centre, where the phase matters.
    pub cross_cov_offset: f64,
    pub posterior_mean: f64,
}

pub fn oracle_errors(seed: u64) -> OracleErrors {
    use bnse::gp::{TimeSeries, TrainedGp};
    use bnse::kernels::{NoiseModel, SmComponent, SmKernel};
    use bnse::spectrum::{cross_cov_exact_sm, prior_cov_exact_sm, SpectrumPosterior, WindowConfig};
    use std::sync::Arc;

    let setup = OracleSetup::new(seed);
    let ens = &setup.ensemble;
    let kernel = SmKernel::new(setup.comps.iter().map(|&(s, g, t)| SmComponent::new(s, g, t)).collect()).unwrap();
    let window = WindowConfig::new(setup.alpha, setup.centre).unwrap();
    let theta = setup.comps[0].2;

    // prior covariance and pseudocovariance at the diagonal peak
    let f_peak = ens.windowed_dft(setup.alpha, setup.centre, theta);
    let f_near = ens.windowed_dft(setup.alpha, setup.centre, theta + 0.2);
    let f_neg = ens.windowed_dft(setup.alpha, setup.centre, -theta);
    let peak = prior_cov_exact_sm(&kernel, &window, theta, theta);
    let kf_err = (empirical_cov(&f_peak, &f_peak) - peak).norm() / peak;
    let kf_near_err =
        (empirical_cov(&f_peak, &f_near) - prior_cov_exact_sm(&kernel, &window, theta, theta + 0.2)).norm() / peak;
    let pseudo = f_peak.iter().zip(&f_neg).map(|(a, b)| a * b).sum::<Complex64>() / f_peak.len() as f64;
    let pseudo_err = (pseudo - prior_cov_exact_sm(&kernel, &window, theta, theta)).norm() / peak;

    // cross-covariance at the window centre and half a width away
    let yc = ens.paths.column(ens.index_of(setup.centre));
    let k_peak = cross_cov_exact_sm(&kernel, &window, setup.centre, theta);
    let kyf_err = rel_err(empirical_cross(&f_peak, yc.iter().copied()), k_peak);
    let t_off = setup.centre + 0.5;
    let y_off = ens.paths.column(ens.index_of(t_off));
    let kyf_off_err =
        (empirical_cross(&f_peak, y_off.iter().copied()) - cross_cov_exact_sm(&kernel, &window, t_off, theta)).norm()
            / k_peak.norm();

    // posterior mean from noisy observations at a handful of grid times
    let noise: f64 = 0.1;
    let obs_idx: Vec<usize> = (0..12).map(|i| ens.index_of(-1.5 + 0.3 * i as f64)).collect();
    let t_obs: Vec<f64> = obs_idx.iter().map(|&i| ens.times[i]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let y = DMatrix::from_fn(ens.n_paths(), obs_idx.len(), |p, j| {
        ens.paths[(p, obs_idx[j])] + noise.sqrt() * rng.sample::<f64, _>(StandardNormal)
    });
    let y_obs: DVector<f64> = y.row(0).transpose();
    let data = TimeSeries::new(t_obs, y_obs.iter().copied().collect()).unwrap();
    let gp = Arc::new(TrainedGp::fixed(kernel, NoiseModel::new(noise).unwrap(), data).unwrap());
    let post = SpectrumPosterior::new(gp, window, None).unwrap();
    let grid: Vec<f64> = (0..41).map(|i| 0.05 * i as f64).collect();
    let closed: Vec<Complex64> = grid
        .iter()
        .map(|&xi| {
            let (re, im) = post.mean(xi);
            Complex64::new(re, im)
        })
        .collect();
    let (k_best, _) = closed
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .unwrap();
    let f_best = ens.windowed_dft(setup.alpha, setup.centre, grid[k_best]);
    let mc_mean = regression_mean(&y, &f_best, &y_obs);

    OracleErrors {
        prior_cov: kf_err.max(kf_near_err),
        pseudo_cov: pseudo_err,
        cross_cov: kyf_err,
        cross_cov_offset: kyf_off_err,
        posterior_mean: rel_err(mc_mean, closed[k_best]),
    }
}

/// Largest `|empirical mean − closed-form mean| / standard error` of the
/// PSD over a 100-point grid, from `n_draws` joint posterior draws.
pub fn chi2_worst_z(n_draws: usize, seed: u64) -> f64 {
    use bnse::gp::{sample_prior, TimeSeries, TrainedGp};
    use bnse::kernels::{NoiseModel, SmComponent, SmKernel};
    use bnse::spectrum::{linspace, SpectrumPosterior, WindowConfig};
    use std::sync::Arc;

    let kernel = SmKernel::new(vec![SmComponent::new(1.0, 0.5, 0.6)]).unwrap();
    let noise = NoiseModel::new(0.2).unwrap();
    let t: Vec<f64> = (0..40).map(|i| 0.37 * i as f64 + 0.1 * ((i * 7 % 5) as f64)).collect();
    let y = sample_prior(&kernel, noise, &t, 1, seed).unwrap();
    let data = TimeSeries::new(t, y.row(0).iter().copied().collect()).unwrap();
    let window = WindowConfig::default_for(&data);
    let gp = Arc::new(TrainedGp::fixed(kernel, noise, data).unwrap());
    let post = SpectrumPosterior::new(gp, window, None).unwrap();
    let grid = linspace(0.0, 1.5, 100);
    let closed: Vec<f64> = post.pointwise(&grid).unwrap().iter().map(|p| p.psd_mean()).collect();
    let draws = post.sample_psd(&grid, n_draws, seed.wrapping_add(1)).unwrap();
    let n = n_draws as f64;
    (0..grid.len())
        .map(|k| {
            let col = draws.column(k);
            let mean = col.mean();
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (mean - closed[k]).abs() / (var / n).sqrt()
        })
        .fold(0.0, f64::max)
}
