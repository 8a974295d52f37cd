//! Gaussian-process regression: marginal likelihood, its gradient,
//! hyperparameter training and prior sampling.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{lomb_scargle, LsConfig, LsNormalization, UNIFORM_TOL};
use crate::error::{BnseError, Result};
use crate::kernels::{kernel_gram, Gram, Kernel, ModelSpec, NoiseModel, SmComponent, SmKernel, StationaryKernel};
use crate::linalg::{cholesky_inverse, log_det};

/// Observation times and values. Times are strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(BnseError::InvalidInput(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.is_empty() {
            return Err(BnseError::InvalidInput("time series is empty".into()));
        }
        if let Some(i) = times.iter().chain(&values).position(|v| !v.is_finite()) {
            return Err(BnseError::InvalidInput(format!("non-finite entry at position {i}")));
        }
        if let Some(i) = times.windows(2).position(|w| w[1] <= w[0]) {
            let what = if times[i + 1] == times[i] {
                "duplicate"
            } else {
                "decreasing"
            };
            return Err(BnseError::InvalidInput(format!(
                "{what} timestamp {} at index {}",
                times[i + 1],
                i + 1
            )));
        }
        Ok(Self { times, values })
    }

    /// Sorts by time (stable) and rejects duplicate timestamps.
    pub fn from_unsorted(pairs: Vec<(f64, f64)>) -> Result<Self> {
        let mut pairs = pairs;
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (times, values) = pairs.into_iter().unzip();
        Self::new(times, values)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn span(&self) -> f64 {
        self.times[self.len() - 1] - self.times[0]
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.times[0] + self.times[self.len() - 1])
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    /// Population variance of the values.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / self.len() as f64
    }

    /// Average-Nyquist frequency `N / (2 span)`.
    pub fn nyquist_like(&self) -> f64 {
        if self.len() < 2 {
            return 0.5;
        }
        self.len() as f64 / (2.0 * self.span())
    }

    /// Copy with the sample mean removed.
    pub fn centred(&self) -> Self {
        let m = self.mean();
        Self {
            times: self.times.clone(),
            values: self.values.iter().map(|v| v - m).collect(),
        }
    }

    /// Copy with every time shifted by `-offset`.
    pub fn shifted(&self, offset: f64) -> Self {
        Self {
            times: self.times.iter().map(|t| t - offset).collect(),
            values: self.values.clone(),
        }
    }

    /// Sub-series at the given (sorted, distinct) indices.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Self::new(
            indices.iter().map(|&i| self.times[i]).collect(),
            indices.iter().map(|&i| self.values[i]).collect(),
        )
    }

    /// Sampling step if the series is uniform within `rel_tol`.
    pub fn uniform_step(&self, rel_tol: f64) -> Result<f64> {
        if self.len() < 2 {
            return Err(BnseError::InvalidInput("need at least two samples".into()));
        }
        let dt = self.span() / (self.len() - 1) as f64;
        let deviation = self
            .times
            .windows(2)
            .map(|w| ((w[1] - w[0]) - dt).abs() / dt)
            .fold(0.0, f64::max);
        if deviation > rel_tol {
            return Err(BnseError::NonUniform { deviation });
        }
        Ok(dt)
    }

    /// FNV-1a hash over the raw bits of times and values.
    pub fn fingerprint(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.times.iter().chain(&self.values) {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        format!("{h:016x}")
    }
}

/// Negative log marginal likelihood
/// `½ yᵀG⁻¹y + ½ log det G + (N/2) log 2π` with `G` the jittered Gram matrix.
pub fn nlml(kernel: &dyn StationaryKernel, noise: NoiseModel, data: &TimeSeries) -> Result<f64> {
    let gram = kernel_gram(kernel, noise, data.times())?;
    Ok(nlml_from_gram(&gram, data.values()).0)
}

fn nlml_from_gram(gram: &Gram, values: &[f64]) -> (f64, DVector<f64>) {
    let y = DVector::from_column_slice(values);
    let w = gram.chol.solve(&y);
    let n = values.len() as f64;
    let value = 0.5 * y.dot(&w) + 0.5 * log_det(&gram.chol) + 0.5 * n * (2.0 * PI).ln();
    (value, w)
}

/// Unconstrained parametrization of an SM kernel plus noise:
/// `[ln σ²_q, ln γ_q, θ_q]` per component followed by `ln σ_n²`.
///
/// `θ` is kept on the raw scale: the kernel is even in `θ`, and `θ = 0`
/// (a baseband component) must be representable.
#[derive(Debug, Clone, PartialEq)]
pub struct SmParams(pub Vec<f64>);

/// Positive hyperparameters are kept within `[1e-10, 1e10]`.
const LOG_LOWER: f64 = -23.025_850_929_940_457;
const LOG_UPPER: f64 = 23.025_850_929_940_457;

impl SmParams {
    pub fn from_model(kernel: &SmKernel, noise: NoiseModel) -> Self {
        let mut v = Vec::with_capacity(3 * kernel.len() + 1);
        for c in &kernel.components {
            v.push(c.sigma2.ln().clamp(LOG_LOWER, LOG_UPPER));
            v.push(c.gamma.ln().clamp(LOG_LOWER, LOG_UPPER));
            v.push(c.theta);
        }
        v.push(noise.sigma2.max(1e-300).ln().clamp(LOG_LOWER, LOG_UPPER));
        Self(v)
    }

    pub fn to_model(&self) -> (SmKernel, NoiseModel) {
        let q = (self.0.len() - 1) / 3;
        let components = (0..q)
            .map(|i| SmComponent {
                sigma2: self.0[3 * i].exp(),
                gamma: self.0[3 * i + 1].exp(),
                theta: self.0[3 * i + 2].abs(),
            })
            .collect();
        let noise = NoiseModel {
            sigma2: self.0[3 * q].exp(),
        };
        (SmKernel { components }, noise)
    }

    fn bounds(len: usize) -> Vec<(f64, f64)> {
        (0..len)
            .map(|i| {
                if i % 3 == 2 && i != len - 1 {
                    (f64::NEG_INFINITY, f64::INFINITY)
                } else {
                    (LOG_LOWER, LOG_UPPER)
                }
            })
            .collect()
    }
}

/// NLML and its gradient with respect to `SmParams` coordinates.
pub fn nlml_and_gradient(kernel: &SmKernel, noise: NoiseModel, data: &TimeSeries) -> Result<(f64, Vec<f64>)> {
    let gram = kernel_gram(kernel, noise, data.times())?;
    let (value, w) = nlml_from_gram(&gram, data.values());
    let n = data.len();
    let inv = cholesky_inverse(&gram.chol);
    // W = G⁻¹ - w wᵀ ; dNLML/dp = ½ Σ_ij W_ij dG_ij/dp
    let wmat = DMatrix::from_fn(n, n, |i, j| inv[(i, j)] - w[i] * w[j]);
    let t = data.times();

    let mut grad = vec![0.0; 3 * kernel.len() + 1];
    for (q, c) in kernel.components.iter().enumerate() {
        let (mut g_s, mut g_g, mut g_t) = (0.0, 0.0, 0.0);
        for i in 0..n {
            for j in 0..=i {
                let tau = t[i] - t[j];
                let e = (-c.gamma * tau * tau).exp();
                let (s, co) = (2.0 * PI * c.theta * tau).sin_cos();
                let mult = if i == j { 0.5 } else { 1.0 };
                let wij = mult * wmat[(i, j)];
                let base = c.sigma2 * e;
                g_s += wij * base * co;
                g_g += wij * c.gamma * (-tau * tau) * base * co;
                g_t += wij * base * (-s) * 2.0 * PI * tau;
            }
        }
        grad[3 * q] = g_s;
        grad[3 * q + 1] = g_g;
        grad[3 * q + 2] = g_t;
    }
    grad[3 * kernel.len()] = 0.5 * noise.sigma2 * wmat.trace();
    Ok((value, grad))
}

/// Gradient of the NLML over `SmParams` coordinates (log scale for the
/// positive hyperparameters, raw scale for `θ`).
pub fn nlml_gradient(kernel: &SmKernel, noise: NoiseModel, data: &TimeSeries) -> Result<Vec<f64>> {
    nlml_and_gradient(kernel, noise, data).map(|(_, g)| g)
}

/// Settings for multi-start hyperparameter training.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Total number of starts, the first being the supplied initialization.
    pub restarts: usize,
    pub max_iter: usize,
    /// Stop once a step improves the NLML by less than this.
    pub ftol: f64,
    /// Stop once the projected gradient norm falls below this.
    pub gtol: f64,
    /// Seed extra starts from Lomb-Scargle peaks instead of random frequencies.
    pub bootstrap_from_lomb_scargle: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            restarts: 5,
            max_iter: 1000,
            ftol: 1e-8,
            gtol: 1e-6,
            bootstrap_from_lomb_scargle: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainStatus {
    GradientTolerance,
    ImprovementTolerance,
    /// Backtracking could not find a decrease; the point is numerically stationary.
    LineSearchStalled,
    MaxIterations,
}

impl TrainStatus {
    pub fn converged(self) -> bool {
        self != TrainStatus::MaxIterations
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub nlml: f64,
    pub step_size: f64,
}

/// Outcome of the optimizer for the winning start.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub status: TrainStatus,
    pub initial_nlml: f64,
    pub final_nlml: f64,
    pub best_restart: usize,
    pub restart_nlml: Vec<f64>,
    pub trace: Vec<TraceRow>,
    /// Offset subtracted from the times during training (their midpoint).
    pub time_shift: f64,
}

impl TrainingSummary {
    /// Writes the trace as `iteration,nlml,step_size`.
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "nlml", "step_size"])?;
        for row in &self.trace {
            w.write_record([
                row.iteration.to_string(),
                row.nlml.to_string(),
                row.step_size.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A GP with fixed hyperparameters and a cached factorization of its Gram matrix.
#[derive(Debug, Clone)]
pub struct TrainedGp {
    kernel: Kernel,
    noise: NoiseModel,
    data: TimeSeries,
    gram: Gram,
    /// `G⁻¹ y`
    weights: DVector<f64>,
    nlml: f64,
    training: Option<TrainingSummary>,
}

impl TrainedGp {
    /// Conditions on `data` with the given hyperparameters; no optimization.
    pub fn fixed(kernel: impl Into<Kernel>, noise: NoiseModel, data: TimeSeries) -> Result<Self> {
        let kernel = kernel.into();
        kernel.validate()?;
        let gram = kernel_gram(&kernel, noise, data.times())?;
        let (nlml, weights) = nlml_from_gram(&gram, data.values());
        Ok(Self {
            kernel,
            noise,
            data,
            gram,
            weights,
            nlml,
            training: None,
        })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn noise(&self) -> NoiseModel {
        self.noise
    }

    pub fn data(&self) -> &TimeSeries {
        &self.data
    }

    pub fn gram(&self) -> &Gram {
        &self.gram
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn nlml(&self) -> f64 {
        self.nlml
    }

    pub fn training(&self) -> Option<&TrainingSummary> {
        self.training.as_ref()
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            kernel: self.kernel.clone(),
            noise_sigma2: self.noise.sigma2,
        }
    }

    /// Relative residual `‖G w - y‖ / ‖y‖` of the cached solve.
    pub fn solve_residual(&self) -> f64 {
        let y = DVector::from_column_slice(self.data.values());
        let r = &self.gram.matrix * &self.weights - &y;
        r.norm() / y.norm().max(f64::MIN_POSITIVE)
    }

    pub fn to_record(&self) -> TrainedGpRecord {
        TrainedGpRecord {
            model: self.model_spec(),
            data: DataFingerprint {
                n: self.data.len(),
                t_first: self.data.times()[0],
                t_last: self.data.times()[self.data.len() - 1],
                hash: self.data.fingerprint(),
            },
            nlml: self.nlml,
            training: self.training.as_ref().map(|t| TrainingRecord {
                status: t.status,
                initial_nlml: t.initial_nlml,
                best_restart: t.best_restart,
                iterations: t.trace.len(),
                time_shift: t.time_shift,
            }),
        }
    }
}

/// JSON form of a trained GP: model, data fingerprint and training outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedGpRecord {
    pub model: ModelSpec,
    pub data: DataFingerprint,
    pub nlml: f64,
    pub training: Option<TrainingRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataFingerprint {
    pub n: usize,
    pub t_first: f64,
    pub t_last: f64,
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub status: TrainStatus,
    pub initial_nlml: f64,
    pub best_restart: usize,
    pub iterations: usize,
    pub time_shift: f64,
}

struct RunResult {
    params: SmParams,
    nlml: f64,
    status: TrainStatus,
    trace: Vec<TraceRow>,
}

fn project(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, (lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(*lo, *hi);
    }
}

fn projected_gradient_norm(x: &[f64], g: &[f64], bounds: &[(f64, f64)]) -> f64 {
    x.iter()
        .zip(g)
        .zip(bounds)
        .map(|((&xi, &gi), &(lo, hi))| {
            let blocked = (xi <= lo && gi > 0.0) || (xi >= hi && gi < 0.0);
            if blocked {
                0.0
            } else {
                gi * gi
            }
        })
        .sum::<f64>()
        .sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Quasi-Newton (L-BFGS) descent with Armijo backtracking on the projected point.
fn minimize_nlml(start: SmParams, data: &TimeSeries, cfg: &TrainConfig) -> Result<RunResult> {
    const MEMORY: usize = 10;
    let bounds = SmParams::bounds(start.0.len());
    let eval = |p: &[f64]| -> Option<(f64, Vec<f64>)> {
        let (k, n) = SmParams(p.to_vec()).to_model();
        nlml_and_gradient(&k, n, data)
            .ok()
            .filter(|(f, g)| f.is_finite() && g.iter().all(|v| v.is_finite()))
    };

    let mut x = start.0;
    project(&mut x, &bounds);
    let (mut f, mut g) = eval(&x).ok_or_else(|| BnseError::NotPositiveDefinite {
        what: "Gram at training start".into(),
        jitter: f64::NAN,
    })?;
    let mut trace = vec![TraceRow {
        iteration: 0,
        nlml: f,
        step_size: 0.0,
    }];
    let mut memory: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
    let mut status = TrainStatus::MaxIterations;

    for iter in 1..=cfg.max_iter {
        if projected_gradient_norm(&x, &g, &bounds) < cfg.gtol {
            status = TrainStatus::GradientTolerance;
            break;
        }
        // two-loop recursion
        let mut d: Vec<f64> = g.clone();
        let mut alphas = Vec::with_capacity(memory.len());
        for (s, y, rho) in memory.iter().rev() {
            let a = rho * dot(s, &d);
            d.iter_mut().zip(y).for_each(|(di, yi)| *di -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = memory.last() {
            let scale = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|di| *di *= scale);
        } else {
            let gn = dot(&g, &g).sqrt();
            d.iter_mut().for_each(|di| *di /= gn.max(1.0));
        }
        for ((s, y, rho), a) in memory.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            d.iter_mut().zip(s).for_each(|(di, si)| *di += (a - b) * si);
        }
        d.iter_mut().for_each(|di| *di = -*di);
        if dot(&d, &g) >= 0.0 {
            memory.clear();
            let gn = dot(&g, &g).sqrt();
            d = g.iter().map(|gi| -gi / gn.max(1.0)).collect();
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut xn: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            project(&mut xn, &bounds);
            let moved: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let decrease = dot(&g, &moved);
            if let Some((fn_, gn)) = eval(&xn) {
                if fn_ <= f + 1e-4 * decrease && fn_ <= f {
                    accepted = Some((xn, fn_, gn));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            if memory.is_empty() {
                status = TrainStatus::LineSearchStalled;
                break;
            }
            // retry from steepest descent
            memory.clear();
            continue;
        };
        let improvement = f - fn_;
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            memory.push((s, y, 1.0 / sy));
            if memory.len() > MEMORY {
                memory.remove(0);
            }
        }
        x = xn;
        f = fn_;
        g = gn;
        trace.push(TraceRow {
            iteration: iter,
            nlml: f,
            step_size: step,
        });
        if improvement < cfg.ftol {
            status = if projected_gradient_norm(&x, &g, &bounds) < cfg.gtol {
                TrainStatus::GradientTolerance
            } else {
                TrainStatus::ImprovementTolerance
            };
            break;
        }
    }
    Ok(RunResult {
        params: SmParams(x),
        nlml: f,
        status,
        trace,
    })
}

/// Maps every `θ` to its alias in `[0, 1/(2 dt)]`. On a grid of step `dt`
/// the Gram matrix is unchanged, but off the grid the alias is the
/// frequency the data actually supports.
pub fn fold_aliases(kernel: &mut SmKernel, dt: f64) {
    let period = 1.0 / dt;
    for c in &mut kernel.components {
        let mut t = c.theta.rem_euclid(period);
        if t > 0.5 * period {
            t = period - t;
        }
        if (t - c.theta).abs() > 1e-12 * period {
            log::info!("folded trained frequency {} to its alias {t}", c.theta);
        }
        c.theta = t;
    }
}

/// Local maxima of a quick Lomb-Scargle pass, strongest first.
fn lomb_scargle_peaks(data: &TimeSeries, count: usize) -> Vec<f64> {
    let nu = data.nyquist_like();
    let m = 2000;
    let grid: Vec<f64> = (1..=m).map(|i| nu * i as f64 / m as f64).collect();
    let cfg = LsConfig {
        grid: grid.clone(),
        fit_mean: true,
        normalization: LsNormalization::None,
    };
    let Ok(est) = lomb_scargle(data, &cfg) else {
        return Vec::new();
    };
    let p = &est.psd_mean;
    let mut peaks: Vec<(f64, f64)> = (1..m - 1)
        .filter(|&i| p[i] > p[i - 1] && p[i] >= p[i + 1])
        .map(|i| (grid[i], p[i]))
        .collect();
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1));
    peaks.into_iter().take(count).map(|(f, _)| f).collect()
}

/// Fits SM hyperparameters by minimizing the NLML from several starts.
///
/// Start 0 is `init`; the others reassign the frequencies of the modulated
/// (`θ > 0`) components, taken from Lomb-Scargle peaks of the data or drawn
/// log-uniformly from `[ν/100, ν]`, `ν = N/(2 span)`. Baseband components
/// keep `θ = 0` as their starting point.
pub fn train(data: &TimeSeries, init: &SmKernel, noise_init: NoiseModel, cfg: &TrainConfig) -> Result<TrainedGp> {
    init.validate()?;
    let time_shift = data.midpoint();
    let shifted = data.shifted(time_shift);
    let initial_nlml = nlml(init, noise_init, &shifted)?;

    let modulated: Vec<usize> = (0..init.len()).filter(|&q| init.components[q].theta > 0.0).collect();
    let n_starts = cfg.restarts.max(1);
    let peaks = if cfg.bootstrap_from_lomb_scargle && !modulated.is_empty() {
        lomb_scargle_peaks(data, n_starts + modulated.len())
    } else {
        Vec::new()
    };
    let nu = data.nyquist_like();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let starts: Vec<SmParams> = (0..n_starts)
        .map(|r| {
            let mut k = init.clone();
            if r > 0 {
                for (slot, &q) in modulated.iter().enumerate() {
                    let idx = r - 1 + slot;
                    k.components[q].theta = match peaks.get(idx) {
                        Some(&f) => f,
                        None => {
                            let u: f64 = rng.random();
                            (nu / 100.0) * 100f64.powf(u)
                        }
                    };
                }
            }
            SmParams::from_model(&k, noise_init)
        })
        .collect();

    let runs: Vec<Result<RunResult>> = starts
        .into_par_iter()
        .map(|s| minimize_nlml(s, &shifted, cfg))
        .collect();
    let mut best: Option<(usize, RunResult)> = None;
    let mut restart_nlml = Vec::with_capacity(runs.len());
    for (i, run) in runs.into_iter().enumerate() {
        match run {
            Ok(r) => {
                restart_nlml.push(r.nlml);
                if best.as_ref().is_none_or(|(_, b)| r.nlml < b.nlml) {
                    best = Some((i, r));
                }
            }
            Err(e) => {
                log::warn!("training start {i} failed: {e}");
                restart_nlml.push(f64::NAN);
            }
        }
    }
    let (best_restart, run) = best.ok_or_else(|| BnseError::NotPositiveDefinite {
        what: "Gram at every training start".into(),
        jitter: f64::NAN,
    })?;
    if !run.status.converged() {
        log::warn!(
            "training stopped at max_iter={} without meeting tolerances (nlml {:.6})",
            cfg.max_iter,
            run.nlml
        );
    }
    let (mut kernel, noise) = run.params.to_model();
    if let Ok(dt) = data.uniform_step(UNIFORM_TOL) {
        fold_aliases(&mut kernel, dt);
    }
    let mut trained = TrainedGp::fixed(kernel, noise, data.clone())?;
    trained.training = Some(TrainingSummary {
        status: run.status,
        initial_nlml,
        final_nlml: run.nlml,
        best_restart,
        restart_nlml,
        trace: run.trace,
        time_shift,
    });
    Ok(trained)
}

/// Draws `n_paths` realizations of `y ~ N(0, G)` at `times`; one row per path.
pub fn sample_prior(
    kernel: &dyn StationaryKernel,
    noise: NoiseModel,
    times: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    let gram = kernel_gram(kernel, noise, times)?;
    let l = gram.chol.l();
    let n = times.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = DMatrix::from_fn(n, n_paths, |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok((l * z).transpose())
}
