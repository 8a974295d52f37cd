use std::sync::Arc;

use bnse::baselines::{lomb_scargle, lomb_scargle_energy_scale, music, periodogram_on_grid, LsConfig};
use bnse::gp::{self, TrainedGp};
use bnse::kernels::ModelSpec;
use bnse::optim::{find_psd_peaks, write_peaks_csv, PeakConfig};
use bnse::spectrum::{Method, SpectrumEstimate, SpectrumPosterior};
use bnse::{BnseError, TimeSeries};

use crate::config::{MethodSelector, RunConfig, TrainingMode};
use crate::error::{CliError, StageExt};
use crate::ingest::ingest_csv;
use crate::plot::{Band, Figure, Line};
use crate::report::{ExperimentReport, Outputs, TrainingInfo};

/// What a subcommand asks of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Estimate,
    Train,
    Sample,
    Peaks,
    Baseline,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Estimate => "estimate",
            Task::Train => "train",
            Task::Sample => "sample",
            Task::Peaks => "peaks",
            Task::Baseline => "baseline",
        }
    }

    fn methods(self, selector: MethodSelector) -> Vec<Method> {
        match self {
            Task::Estimate => selector.methods(),
            Task::Train => Vec::new(),
            Task::Sample | Task::Peaks => vec![Method::Bnse],
            Task::Baseline => match selector {
                MethodSelector::Bnse | MethodSelector::All => {
                    vec![Method::LombScargle, Method::Periodogram, Method::Music]
                }
                other => other.methods(),
            },
        }
    }
}

/// In-memory results of one pipeline pass.
#[derive(Debug, Default)]
pub struct Analysis {
    pub grid: Vec<f64>,
    pub trained: Option<Arc<TrainedGp>>,
    pub posterior: Option<SpectrumPosterior>,
    pub estimates: Vec<SpectrumEstimate>,
}

impl Analysis {
    pub fn estimate(&self, method: Method) -> Option<&SpectrumEstimate> {
        self.estimates.iter().find(|e| e.method == method)
    }
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> Result<(), BnseError>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write(&mut buf).stage("output")?;
    Ok(buf)
}

/// Runs a subcommand on `cfg.input`; nothing is written unless every stage succeeds.
pub fn run(cfg: &RunConfig, task: Task) -> Result<ExperimentReport, CliError> {
    let input = cfg
        .input
        .as_ref()
        .ok_or_else(|| CliError::Usage("an input CSV is required (--input)".into()))?;
    let echo = serde_json::to_value(cfg).expect("config serializes");
    let mut report = ExperimentReport::new(task.name(), echo);
    let data = report.timed("ingest", || ingest_csv(input))?;
    let model = if task == Task::Train || task.methods(cfg.method).contains(&Method::Bnse) {
        Some(cfg.model(&data)?)
    } else {
        None
    };
    let mut outputs = Outputs::default();
    let methods = task.methods(cfg.method);
    let explicit = methods.len() == 1;
    analyze(cfg, task, &data, model, &methods, explicit, &mut report, &mut outputs)?;
    outputs.write(&cfg.out, &mut report)?;
    Ok(report)
}

pub fn run_estimate(cfg: &RunConfig) -> Result<ExperimentReport, CliError> {
    run(cfg, Task::Estimate)
}

/// Trains or conditions the GP, evaluates the requested estimators on one
/// shared grid and stages their files in `outputs`.
///
/// Uniform-sampling baselines that cannot run on `data` are skipped with a
/// warning unless `strict` is set.
#[allow(clippy::too_many_arguments)]
pub fn analyze(
    cfg: &RunConfig,
    task: Task,
    data: &TimeSeries,
    model: Option<ModelSpec>,
    methods: &[Method],
    strict: bool,
    report: &mut ExperimentReport,
    outputs: &mut Outputs,
) -> Result<Analysis, CliError> {
    let grid = cfg.grid(data);
    let mut out = Analysis {
        grid: grid.clone(),
        ..Default::default()
    };

    if let Some(model) = model {
        let trained = if task == Task::Train || cfg.training == TrainingMode::Train {
            let sm = model
                .kernel
                .as_sm()
                .ok_or_else(|| CliError::Usage("training needs a spectral-mixture (\"sm\") kernel".into()))?;
            report
                .timed("train", || gp::train(data, sm, model.noise(), &cfg.train_config()))
                .stage("train")?
        } else {
            report
                .timed("factorize", || {
                    TrainedGp::fixed(model.kernel.clone(), model.noise(), data.clone())
                })
                .stage("factorize")?
        };
        report.gram_factorizations += 1;
        report.model = Some(trained.model_spec());
        let record = serde_json::to_vec_pretty(&trained.to_record()).expect("record serializes");
        outputs.add("model.json", record);
        if let Some(summary) = trained.training() {
            report.training = Some(TrainingInfo::from(summary));
            outputs.add("trace.csv", csv_bytes(|b| summary.write_trace_csv(b))?);
        }
        out.trained = Some(Arc::new(trained));
    }

    if methods.contains(&Method::Bnse) {
        let trained = out.trained.clone().expect("BNSE runs need a model");
        let window = cfg.window.resolve(data).stage("window")?;
        report.window = Some(window);
        let post = SpectrumPosterior::new(trained, window, None).stage("posterior")?;
        log::info!(
            "posterior with {:?}, window alpha {} centre {}",
            post.mode(),
            window.alpha,
            window.centre
        );

        if task != Task::Peaks {
            let est = report.timed("posterior", || post.evaluate(&grid)).stage("posterior")?;
            outputs.add("bnse.csv", csv_bytes(|b| est.write_csv(b))?);
            outputs.add("bnse_band.csv", csv_bytes(|b| est.write_band_csv(b, 2.0))?);
            out.estimates.push(est);
        }
        if task != Task::Sample {
            let pcfg = PeakConfig {
                n_starts: cfg.n_starts,
                seed: cfg.seed,
                ..PeakConfig::default()
            };
            let range = (grid[0], grid[grid.len() - 1]);
            let peaks = report
                .timed("peaks", || find_psd_peaks(&post, range, &pcfg))
                .stage("peaks")?;
            outputs.add("peaks.csv", csv_bytes(|b| write_peaks_csv(&peaks, b))?);
            report.peaks = peaks;
        }
        if task == Task::Sample {
            let draws = report
                .timed("sample", || post.sample_psd(&grid, cfg.n_samples, cfg.seed))
                .stage("sample")?;
            outputs.add("psd_samples.csv", csv_bytes(|b| write_samples_csv(&grid, &draws, b))?);
        }
        report.clamped_variances = post.clamped_count();
        if report.clamped_variances > 0 {
            report.warn(format!(
                "{} slightly negative posterior variances clamped to zero",
                report.clamped_variances
            ));
        }
        out.posterior = Some(post);
    }

    for &method in methods.iter().filter(|m| **m != Method::Bnse) {
        let res = report.timed(method.as_str(), || match method {
            Method::LombScargle => lomb_scargle(data, &LsConfig::new(grid.clone())),
            Method::Periodogram => periodogram_on_grid(data, &grid),
            Method::Music => music(data, &cfg.music, &grid),
            Method::Bnse => unreachable!(),
        });
        match res {
            Ok(est) => {
                outputs.add(&format!("{}.csv", method.as_str()), csv_bytes(|b| est.write_csv(b))?);
                out.estimates.push(est);
            }
            Err(e @ (BnseError::NonUniform { .. } | BnseError::InvalidInput(_))) if !strict => {
                report.warn(format!("skipped {method}: {e}"));
            }
            Err(e) => return Err(e).stage(method.as_str()),
        }
    }

    if cfg.svg && !out.estimates.is_empty() {
        let title = format!("{} spectrum", report.name);
        outputs.add(
            "spectrum.svg",
            spectrum_svg(
                &title,
                data,
                &out,
                &report.peaks.iter().map(|p| p.freq).collect::<Vec<_>>(),
            )
            .into_bytes(),
        );
    }
    Ok(out)
}

/// `freq` followed by one column per draw.
pub fn write_samples_csv<W: std::io::Write>(
    grid: &[f64],
    draws: &nalgebra::DMatrix<f64>,
    out: W,
) -> Result<(), BnseError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["freq".to_string()];
    header.extend((0..draws.nrows()).map(|i| format!("draw_{i}")));
    w.write_record(&header)?;
    for (j, f) in grid.iter().enumerate() {
        let mut row = vec![f.to_string()];
        row.extend((0..draws.nrows()).map(|i| draws[(i, j)].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Baseline power expressed in the units of the BNSE PSD. The one-sided
/// periodogram shares the Lomb-Scargle scale on even sampling.
pub fn baseline_in_psd_units(data: &TimeSeries, est: &SpectrumEstimate) -> Vec<f64> {
    let scale = lomb_scargle_energy_scale(data);
    est.psd_mean.iter().map(|p| p * scale).collect()
}

/// Fraction of grid points where `values` lies inside `mean ± k std`.
pub fn band_coverage(bnse: &SpectrumEstimate, values: &[f64], k: f64) -> f64 {
    let inside = bnse
        .psd_mean
        .iter()
        .zip(&bnse.psd_std)
        .zip(values)
        .filter(|((m, s), v)| (**v - **m).abs() <= k * **s)
        .count();
    inside as f64 / values.len().max(1) as f64
}

fn spectrum_svg(title: &str, data: &TimeSeries, a: &Analysis, peaks: &[f64]) -> String {
    let bnse = a.estimate(Method::Bnse);
    let band = bnse.map(|e| e.band(2.0));
    let scaled: Vec<(Method, Vec<f64>)> = a
        .estimates
        .iter()
        .filter(|e| e.method != Method::Bnse)
        .map(|e| {
            let vals = match (e.method, bnse) {
                (Method::Music, Some(b)) => {
                    let top = e.psd_mean.iter().cloned().fold(0.0, f64::max);
                    let target = b.psd_mean.iter().cloned().fold(0.0, f64::max);
                    e.psd_mean
                        .iter()
                        .map(|v| v / top.max(f64::MIN_POSITIVE) * target)
                        .collect()
                }
                (_, Some(_)) => baseline_in_psd_units(data, e),
                (_, None) => e.psd_mean.clone(),
            };
            (e.method, vals)
        })
        .collect();

    let mut fig = Figure {
        title,
        x_label: "frequency",
        y_label: "power",
        markers: peaks.to_vec(),
        ..Default::default()
    };
    if let (Some(b), Some((lo, hi))) = (bnse, band.as_ref()) {
        fig.bands.push(Band {
            x: &b.grid,
            lo,
            hi,
            colour: "#1f77b4",
        });
        fig.lines.push(Line {
            label: "BNSE (2 sd)",
            x: &b.grid,
            y: &b.psd_mean,
            colour: "#1f77b4",
            dashed: false,
        });
    }
    for (method, vals) in &scaled {
        let (label, colour) = match method {
            Method::LombScargle => ("Lomb-Scargle", "#d62728"),
            Method::Periodogram => ("periodogram", "#2ca02c"),
            Method::Music if bnse.is_some() => ("MUSIC (rescaled)", "#9467bd"),
            _ => ("MUSIC", "#9467bd"),
        };
        fig.lines.push(Line {
            label,
            x: &a.grid,
            y: vals,
            colour,
            dashed: true,
        });
    }
    fig.to_svg()
}
