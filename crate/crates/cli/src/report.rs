use std::path::{Path, PathBuf};
use std::time::Instant;

use bnse::gp::{TrainStatus, TrainingSummary};
use bnse::kernels::ModelSpec;
use bnse::optim::Peak;
use bnse::spectrum::WindowConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// One pass/fail assertion with the number it was decided on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub requirement: String,
}

impl Check {
    pub fn at_most(name: &str, measured: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            passed: measured <= limit,
            measured,
            requirement: format!("<= {limit}"),
        }
    }

    pub fn at_least(name: &str, measured: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            passed: measured >= limit,
            measured,
            requirement: format!(">= {limit}"),
        }
    }

    pub fn near(name: &str, measured: f64, target: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            passed: (measured - target).abs() <= tol,
            measured,
            requirement: format!("{target} +/- {tol}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingInfo {
    pub status: TrainStatus,
    pub initial_nlml: f64,
    pub final_nlml: f64,
    pub best_restart: usize,
    pub restart_nlml: Vec<f64>,
    pub iterations: usize,
    pub time_shift: f64,
}

impl From<&TrainingSummary> for TrainingInfo {
    fn from(s: &TrainingSummary) -> Self {
        Self {
            status: s.status,
            initial_nlml: s.initial_nlml,
            final_nlml: s.final_nlml,
            best_restart: s.best_restart,
            restart_nlml: s.restart_nlml.clone(),
            iterations: s.trace.len().saturating_sub(1),
            time_shift: s.time_shift,
        }
    }
}

/// Summary of a run, written as `report.json` next to the files it lists.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub config: serde_json::Value,
    /// Paths relative to the output directory.
    pub files: Vec<String>,
    pub timings: Vec<Timing>,
    /// Cubic-cost factorizations performed after training.
    pub gram_factorizations: usize,
    pub model: Option<ModelSpec>,
    pub window: Option<WindowConfig>,
    pub training: Option<TrainingInfo>,
    pub peaks: Vec<Peak>,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
    pub clamped_variances: usize,
}

impl ExperimentReport {
    pub fn new(name: &str, config: serde_json::Value) -> Self {
        Self {
            name: name.into(),
            config,
            files: Vec::new(),
            timings: Vec::new(),
            gram_factorizations: 0,
            model: None,
            window: None,
            training: None,
            peaks: Vec::new(),
            checks: Vec::new(),
            warnings: Vec::new(),
            clamped_variances: 0,
        }
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::warn!("{msg}");
        self.warnings.push(msg);
    }

    /// Runs `f`, recording its wall time under `stage`.
    pub fn timed<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        let ms = start.elapsed().as_secs_f64() * 1e3;
        log::info!("{stage}: {ms:.1} ms");
        self.timings.push(Timing {
            stage: stage.into(),
            ms,
        });
        out
    }

    pub fn total_ms(&self) -> f64 {
        self.timings.iter().map(|t| t.ms).sum()
    }
}

/// Files produced by a run, held in memory until everything has succeeded.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    /// Writes every file, then the report listing them.
    pub fn write(self, dir: &Path, report: &mut ExperimentReport) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("cannot create {}", dir.display()), e))?;
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(|e| CliError::io(format!("cannot write {}", path.display()), e))?;
            report.files.push(name.clone());
        }
        report.files.push("report.json".into());
        let path = dir.join("report.json");
        let json = serde_json::to_vec_pretty(report).expect("report serializes");
        std::fs::write(&path, json).map_err(|e| CliError::io(format!("cannot write {}", path.display()), e))?;
        Ok(path)
    }
}
