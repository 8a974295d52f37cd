use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use bnse::baselines::{lomb_scargle, lomb_scargle_energy_scale, LsConfig};
use bnse::datasets;
use bnse::gp::{self, sample_prior, TrainConfig};
use bnse::kernels::{ModelSpec, NoiseModel, SmComponent, SmKernel, WhiteNoise};
use bnse::spectrum::{linspace, Method};
use bnse::{BnseError, TimeSeries};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{RunConfig, WindowSetting};
use crate::error::{CliError, StageExt};
use crate::ingest::{ingest_csv, write_series};
use crate::pipeline::{analyze, band_coverage, baseline_in_psd_units, Task};
use crate::report::{Check, ExperimentReport, Outputs, TrainingInfo};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentName {
    LineSpectra,
    Discrimination,
    Sunspots,
}

impl FromStr for ExperimentName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "line-spectra" => Ok(Self::LineSpectra),
            "discrimination" => Ok(Self::Discrimination),
            "sunspots" => Ok(Self::Sunspots),
            _ => Err(format!(
                "unknown experiment `{s}` (expected line-spectra, discrimination or sunspots)"
            )),
        }
    }
}

impl fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::LineSpectra => "line-spectra",
            Self::Discrimination => "discrimination",
            Self::Sunspots => "sunspots",
        })
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOptions {
    pub seed: u64,
    pub out: PathBuf,
    /// Sunspots: `year,count` file. Discrimination: the test series B.
    pub data: Option<PathBuf>,
    /// Discrimination: the training series A.
    pub train_data: Option<PathBuf>,
    pub svg: bool,
}

impl ExperimentOptions {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self {
            seed: 0,
            out: out.into(),
            data: None,
            train_data: None,
            svg: true,
        }
    }
}

pub const LINE_TOL: f64 = 0.01;
pub const LINE_COVERAGE: f64 = 0.95;
pub const LINE_SECONDS: f64 = 60.0;
pub const SUNSPOT_PEAK: f64 = 0.089;
pub const SUNSPOT_TOL: f64 = 0.005;
pub const SUNSPOT_SECONDS: f64 = 120.0;
pub const DISCRIMINATION_COVERAGE: f64 = 0.90;

/// Reproduces one of the three experiments and writes its outputs to `opts.out`.
pub fn run_experiment(name: ExperimentName, opts: &ExperimentOptions) -> Result<ExperimentReport, CliError> {
    let start = Instant::now();
    let (mut report, outputs) = match name {
        ExperimentName::LineSpectra => line_spectra(opts)?,
        ExperimentName::Discrimination => discrimination(opts)?,
        ExperimentName::Sunspots => sunspots(opts)?,
    };
    let secs = start.elapsed().as_secs_f64();
    match name {
        ExperimentName::LineSpectra => report.checks.push(Check::at_most("runtime_s", secs, LINE_SECONDS)),
        ExperimentName::Sunspots => report.checks.push(Check::at_most("runtime_s", secs, SUNSPOT_SECONDS)),
        ExperimentName::Discrimination => {}
    }
    for c in &report.checks {
        log::info!(
            "{} {}: {} ({})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.measured,
            c.requirement
        );
    }
    outputs.write(&opts.out, &mut report)?;
    Ok(report)
}

fn base_config(opts: &ExperimentOptions) -> RunConfig {
    RunConfig {
        out: opts.out.clone(),
        seed: opts.seed,
        svg: opts.svg,
        ..RunConfig::default()
    }
}

fn white_noise(times: &[f64], sigma2: f64, seed: u64) -> Result<Vec<f64>, BnseError> {
    let draw = sample_prior(&WhiteNoise { sigma2 }, NoiseModel::new(0.0)?, times, 1, seed)?;
    Ok(draw.row(0).iter().copied().collect())
}

/// Two tones, `10 cos(2π 0.5 t) - 5 sin(2π t)`, at 240 even times on
/// [-10, 10] with unit noise.
pub fn line_spectra_data(seed: u64) -> Result<TimeSeries, BnseError> {
    let t = linspace(-10.0, 10.0, 240);
    let noise = white_noise(&t, 1.0, seed)?;
    let y = t
        .iter()
        .zip(&noise)
        .map(|(&t, e)| {
            10.0 * (2.0 * std::f64::consts::PI * 0.5 * t).cos() - 5.0 * (2.0 * std::f64::consts::PI * t).sin() + e
        })
        .collect();
    TimeSeries::new(t, y)
}

fn line_spectra(opts: &ExperimentOptions) -> Result<(ExperimentReport, Outputs), CliError> {
    let data = line_spectra_data(opts.seed).stage("data")?;
    let mut cfg = base_config(opts);
    cfg.window = WindowSetting::Manual {
        alpha: Some(1.0 / (2.0 * 50f64.powi(2))),
        centre: Some(0.0),
    };
    cfg.freq_min = 0.0;
    cfg.freq_max = Some(6.0);
    let kernel = SmKernel::new(vec![SmComponent::new(
        data.variance(),
        1.0 / (2.0 * 0.05f64.powi(2)),
        0.0,
    )])
    .stage("model")?;
    let model = ModelSpec::new(kernel, NoiseModel::new(1.0).stage("model")?);

    let mut report = ExperimentReport::new("line-spectra", serde_json::to_value(&cfg).expect("config serializes"));
    let mut outputs = Outputs::default();
    outputs.add("data.csv", series_bytes(&data)?);
    let methods = [Method::Bnse, Method::LombScargle, Method::Periodogram, Method::Music];
    let a = analyze(
        &cfg,
        Task::Estimate,
        &data,
        Some(model),
        &methods,
        true,
        &mut report,
        &mut outputs,
    )?;

    let mut top: Vec<f64> = report.peaks.iter().take(2).map(|p| p.freq).collect();
    top.sort_by(f64::total_cmp);
    report.checks.push(Check::near(
        "peak_low",
        top.first().copied().unwrap_or(f64::NAN),
        0.5,
        LINE_TOL,
    ));
    report.checks.push(Check::near(
        "peak_high",
        top.get(1).copied().unwrap_or(f64::NAN),
        1.0,
        LINE_TOL,
    ));
    let bnse = a.estimate(Method::Bnse).expect("bnse evaluated");
    let ls = baseline_in_psd_units(&data, a.estimate(Method::LombScargle).expect("ls evaluated"));
    report.checks.push(Check::at_least(
        "ls_within_3sd",
        band_coverage(bnse, &ls, 3.0),
        LINE_COVERAGE,
    ));
    Ok((report, outputs))
}

fn sunspots(opts: &ExperimentOptions) -> Result<(ExperimentReport, Outputs), CliError> {
    let raw = match &opts.data {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::io(format!("sunspot data {} not readable", p.display()), e))?;
            datasets::parse_yearly(&text).stage("ingest")?
        }
        None => datasets::sunspots(),
    };
    let data = raw.centred();
    let mut cfg = base_config(opts);
    cfg.window = WindowSetting::Manual {
        alpha: Some(1e-3),
        centre: Some(data.midpoint()),
    };
    cfg.freq_min = 0.0;
    cfg.freq_max = Some(0.5);
    let var = data.variance();
    // unit lengthscale: exp(-τ²/2)
    let kernel = SmKernel::new(vec![SmComponent::new(var, 0.5, 0.0)]).stage("model")?;
    let model = ModelSpec::new(kernel, NoiseModel::new(0.1 * var).stage("model")?);

    let mut report = ExperimentReport::new("sunspots", serde_json::to_value(&cfg).expect("config serializes"));
    let mut outputs = Outputs::default();
    outputs.add("data.csv", series_bytes(&raw)?);
    let methods = [Method::Bnse, Method::LombScargle, Method::Periodogram, Method::Music];
    analyze(
        &cfg,
        Task::Estimate,
        &data,
        Some(model),
        &methods,
        false,
        &mut report,
        &mut outputs,
    )?;
    let global = report.peaks.first().map_or(f64::NAN, |p| p.freq);
    report
        .checks
        .push(Check::near("global_peak", global, SUNSPOT_PEAK, SUNSPOT_TOL));
    Ok((report, outputs))
}

pub fn surrogate_a() -> SmKernel {
    SmKernel::new(vec![
        SmComponent::new(1.0, 0.01, 0.0),
        SmComponent::new(1.0, 0.01, 0.25),
        SmComponent::new(0.1, 1.0, 0.0),
    ])
    .expect("valid surrogate kernel")
}

pub fn surrogate_b() -> SmKernel {
    SmKernel::new(vec![
        SmComponent::new(3.0, 0.005, 0.0),
        SmComponent::new(0.3, 0.01, 0.25),
        SmComponent::new(0.1, 1.0, 0.0),
    ])
    .expect("valid surrogate kernel")
}

/// Series A and B: one GP draw each from the surrogate kernels at 600 unit-spaced times.
pub fn surrogate_pair(seed: u64) -> Result<(TimeSeries, TimeSeries), BnseError> {
    let t: Vec<f64> = (0..600).map(|i| i as f64).collect();
    let zero = NoiseModel::new(0.0)?;
    let a = sample_prior(&surrogate_a(), zero, &t, 1, seed)?;
    let b = sample_prior(&surrogate_b(), zero, &t, 1, seed.wrapping_add(1))?;
    Ok((
        TimeSeries::new(t.clone(), a.row(0).iter().copied().collect())?,
        TimeSeries::new(t, b.row(0).iter().copied().collect())?,
    ))
}

/// Seeded uniform choice of `n / 10` indices without replacement, sorted,
/// observed with added noise of standard deviation 0.1.
pub fn subsample_tenth(series: &TimeSeries, seed: u64) -> Result<TimeSeries, BnseError> {
    let n = series.len();
    let k = (n / 10).max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, k).into_vec();
    idx.sort_unstable();
    let sub = series.select(&idx)?;
    let noise = white_noise(sub.times(), 0.01, seed.wrapping_add(2))?;
    TimeSeries::new(
        sub.times().to_vec(),
        sub.values().iter().zip(&noise).map(|(y, e)| y + e).collect(),
    )
}

fn load_or(path: &Option<PathBuf>, what: &str) -> Result<Option<TimeSeries>, CliError> {
    match path {
        Some(p) if !Path::new(p).exists() => {
            Err(CliError::Usage(format!("{what} file {} does not exist", p.display())))
        }
        Some(p) => Ok(Some(ingest_csv(p)?)),
        None => Ok(None),
    }
}

fn discrimination(opts: &ExperimentOptions) -> Result<(ExperimentReport, Outputs), CliError> {
    let (a, b) = match (
        load_or(&opts.train_data, "training series A")?,
        load_or(&opts.data, "test series B")?,
    ) {
        (Some(a), Some(b)) => (a, b),
        (None, None) => surrogate_pair(opts.seed).stage("data")?,
        _ => {
            return Err(CliError::Usage(
                "discrimination needs both --train-data (A) and --data (B), or neither for the synthetic surrogate"
                    .into(),
            ))
        }
    };
    let test = subsample_tenth(&b, opts.seed.wrapping_add(3)).stage("data")?;

    let mut cfg = base_config(opts);
    let width = 2.0 * b.span();
    cfg.window = WindowSetting::Manual {
        alpha: Some(1.0 / (2.0 * width * width)),
        centre: Some(b.midpoint()),
    };
    cfg.freq_min = 0.0;
    // Nyquist of the mean sampling step of B
    cfg.freq_max = Some(0.5 * (b.len() - 1) as f64 / b.span());
    cfg.grid_size = 500;
    let mut report = ExperimentReport::new("discrimination", serde_json::to_value(&cfg).expect("config serializes"));

    let var = a.variance();
    let init = SmKernel::new(vec![
        SmComponent::new(var / 3.0, 0.01, 0.0),
        SmComponent::new(var / 3.0, 0.01, 0.1),
        SmComponent::new(var / 3.0, 1.0, 0.0),
    ])
    .stage("model")?;
    let tcfg = TrainConfig {
        restarts: 3,
        max_iter: 300,
        seed: opts.seed,
        ..TrainConfig::default()
    };
    let trained = report
        .timed("train", || gp::train(&a, &init, NoiseModel::new(0.01 * var)?, &tcfg))
        .stage("train")?;
    report.training = trained.training().map(TrainingInfo::from);
    let mut outputs = Outputs::default();
    if let Some(s) = trained.training() {
        let mut buf = Vec::new();
        s.write_trace_csv(&mut buf).stage("output")?;
        outputs.add("train_trace.csv", buf);
    }
    outputs.add("train_a.csv", series_bytes(&a)?);
    outputs.add("test_b_full.csv", series_bytes(&b)?);
    outputs.add("test_b_observed.csv", series_bytes(&test)?);

    let methods = [Method::Bnse, Method::LombScargle];
    let analysis = analyze(
        &cfg,
        Task::Estimate,
        &test,
        Some(trained.model_spec()),
        &methods,
        true,
        &mut report,
        &mut outputs,
    )?;

    let truth = report
        .timed("ground_truth", || {
            lomb_scargle(&b, &LsConfig::new(analysis.grid.clone()))
        })
        .stage("ground_truth")?;
    let scale = lomb_scargle_energy_scale(&b);
    let truth: Vec<f64> = truth.psd_mean.iter().map(|p| p * scale).collect();
    let bnse = analysis.estimate(Method::Bnse).expect("bnse evaluated");
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["freq", "ls_full_b"])
            .map_err(BnseError::from)
            .stage("output")?;
        for (f, v) in analysis.grid.iter().zip(&truth) {
            w.write_record([f.to_string(), v.to_string()])
                .map_err(BnseError::from)
                .stage("output")?;
        }
        w.flush().map_err(|e| CliError::io("ground truth", e))?;
    }
    outputs.add("ground_truth.csv", buf);
    report.checks.push(Check::at_least(
        "ground_truth_within_3sd",
        band_coverage(bnse, &truth, 3.0),
        DISCRIMINATION_COVERAGE,
    ));
    Ok((report, outputs))
}

fn series_bytes(series: &TimeSeries) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write_series(series, &mut buf).stage("output")?;
    Ok(buf)
}
