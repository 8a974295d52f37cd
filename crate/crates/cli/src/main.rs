use std::path::PathBuf;
use std::process::ExitCode;

use bnse_cli::config::{MethodSelector, Overrides, RunConfig};
use bnse_cli::error::CliError;
use bnse_cli::experiments::{run_experiment, ExperimentName, ExperimentOptions};
use bnse_cli::pipeline::{run, Task};
use bnse_cli::report::ExperimentReport;
use clap::{Args, Parser, Subcommand};

/// Bayesian spectral estimation for (possibly unevenly) sampled time series.
#[derive(Debug, Parser)]
#[command(name = "bnse", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Posterior spectrum, PSD band and peaks, plus any requested baselines.
    Estimate(Common),
    /// Fit the spectral-mixture hyperparameters by maximum marginal likelihood.
    Train(Common),
    /// Draw PSD samples from the posterior.
    Sample {
        #[command(flatten)]
        common: Common,
        /// Number of PSD draws.
        #[arg(long, default_value_t = 100)]
        n_samples: usize,
    },
    /// Locate local maxima of the posterior-mean PSD.
    Peaks {
        #[command(flatten)]
        common: Common,
        /// Restarts of the peak search.
        #[arg(long)]
        n_starts: Option<usize>,
    },
    /// Classical estimators only (Lomb-Scargle, periodogram, MUSIC).
    Baseline(Common),
    /// Reproduce one of the bundled experiments.
    Experiment {
        /// line-spectra, discrimination or sunspots
        name: ExperimentName,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Sunspots: `year,count` CSV. Discrimination: test series B.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Discrimination: training series A.
        #[arg(long)]
        train_data: Option<PathBuf>,
        #[arg(long)]
        no_svg: bool,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Two-column `t,y` CSV.
    #[arg(long)]
    input: Option<PathBuf>,
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model as inline JSON or a path to a JSON file.
    #[arg(long)]
    kernel: Option<String>,
    /// Window decay (default: half-span window).
    #[arg(long)]
    alpha: Option<f64>,
    /// Window centre (default: data midpoint).
    #[arg(long)]
    centre: Option<f64>,
    #[arg(long)]
    freq_min: Option<f64>,
    /// Default: N / (2 span).
    #[arg(long)]
    freq_max: Option<f64>,
    #[arg(long)]
    grid_size: Option<usize>,
    /// bnse, ls, periodogram, music or all
    #[arg(long)]
    method: Option<MethodSelector>,
    /// Fit hyperparameters before estimating.
    #[arg(long)]
    train: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        let flags = Overrides {
            input: self.input.clone(),
            kernel: self.kernel.clone(),
            alpha: self.alpha,
            centre: self.centre,
            freq_min: self.freq_min,
            freq_max: self.freq_max,
            grid_size: self.grid_size,
            method: self.method,
            train: self.train,
            seed: self.seed,
            out: self.out.clone(),
        };
        RunConfig::load(self.config.as_deref(), &flags)
    }
}

fn dispatch(cmd: Command) -> Result<ExperimentReport, CliError> {
    match cmd {
        Command::Estimate(c) => run(&c.load()?, Task::Estimate),
        Command::Train(c) => run(&c.load()?, Task::Train),
        Command::Sample { common, n_samples } => {
            let mut cfg = common.load()?;
            cfg.n_samples = n_samples;
            run(&cfg, Task::Sample)
        }
        Command::Peaks { common, n_starts } => {
            let mut cfg = common.load()?;
            if let Some(n) = n_starts {
                cfg.n_starts = n;
            }
            cfg.validate()?;
            run(&cfg, Task::Peaks)
        }
        Command::Baseline(c) => run(&c.load()?, Task::Baseline),
        Command::Experiment {
            name,
            seed,
            out,
            data,
            train_data,
            no_svg,
        } => {
            let opts = ExperimentOptions {
                seed,
                out,
                data,
                train_data,
                svg: !no_svg,
            };
            run_experiment(name, &opts)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli.command) {
        Ok(report) => {
            for c in &report.checks {
                println!(
                    "{} {}: measured {} (required {})",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.measured,
                    c.requirement
                );
            }
            for p in &report.peaks {
                println!("peak {:.6} psd {:.6e}", p.freq, p.psd_mean);
            }
            println!("wrote {} files", report.files.len());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
