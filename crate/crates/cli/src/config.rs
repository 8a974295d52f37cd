use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use bnse::baselines::MusicConfig;
use bnse::gp::TrainConfig;
use bnse::kernels::{ModelSpec, NoiseModel, SmKernel};
use bnse::spectrum::{linspace, Method, WindowConfig};
use bnse::{BnseError, TimeSeries};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, StageExt};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodSelector {
    Bnse,
    Ls,
    Periodogram,
    Music,
    All,
}

impl MethodSelector {
    pub fn methods(self) -> Vec<Method> {
        match self {
            MethodSelector::Bnse => vec![Method::Bnse],
            MethodSelector::Ls => vec![Method::LombScargle],
            MethodSelector::Periodogram => vec![Method::Periodogram],
            MethodSelector::Music => vec![Method::Music],
            MethodSelector::All => vec![Method::Bnse, Method::LombScargle, Method::Periodogram, Method::Music],
        }
    }
}

impl FromStr for MethodSelector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bnse" => Ok(Self::Bnse),
            "ls" => Ok(Self::Ls),
            "periodogram" => Ok(Self::Periodogram),
            "music" => Ok(Self::Music),
            "all" => Ok(Self::All),
            _ => Err(format!(
                "unknown method `{s}` (expected bnse, ls, periodogram, music or all)"
            )),
        }
    }
}

impl fmt::Display for MethodSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Bnse => "bnse",
            Self::Ls => "ls",
            Self::Periodogram => "periodogram",
            Self::Music => "music",
            Self::All => "all",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingMode {
    /// Use the kernel hyperparameters as given.
    Fixed,
    /// Fit them by maximum marginal likelihood first.
    Train,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Auto {
    Auto,
}

/// `"auto"` or explicit window parameters; a missing field is automatic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WindowSetting {
    Auto(Auto),
    Manual {
        #[serde(default)]
        alpha: Option<f64>,
        #[serde(default)]
        centre: Option<f64>,
    },
}

impl Default for WindowSetting {
    fn default() -> Self {
        WindowSetting::Auto(Auto::Auto)
    }
}

impl WindowSetting {
    pub fn resolve(&self, data: &TimeSeries) -> Result<WindowConfig, BnseError> {
        let auto = WindowConfig::default_for(data);
        match *self {
            WindowSetting::Auto(_) => Ok(auto),
            WindowSetting::Manual { alpha, centre } => {
                WindowConfig::new(alpha.unwrap_or(auto.alpha), centre.unwrap_or(auto.centre))
            }
        }
    }

    fn set(&mut self, alpha: Option<f64>, centre: Option<f64>) {
        if alpha.is_none() && centre.is_none() {
            return;
        }
        let (a0, c0) = match *self {
            WindowSetting::Auto(_) => (None, None),
            WindowSetting::Manual { alpha, centre } => (alpha, centre),
        };
        *self = WindowSetting::Manual {
            alpha: alpha.or(a0),
            centre: centre.or(c0),
        };
    }
}

/// Everything a run needs. Loaded from JSON, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    /// Inline model; takes precedence over `kernel_file`.
    pub kernel: Option<ModelSpec>,
    pub kernel_file: Option<PathBuf>,
    pub window: WindowSetting,
    pub freq_min: f64,
    /// Defaults to `N / (2 span)`.
    pub freq_max: Option<f64>,
    pub grid_size: usize,
    pub method: MethodSelector,
    pub training: TrainingMode,
    pub restarts: usize,
    pub max_iter: usize,
    pub bootstrap_from_lomb_scargle: bool,
    pub out: PathBuf,
    pub seed: u64,
    pub n_starts: usize,
    pub n_samples: usize,
    pub music: MusicConfig,
    pub svg: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            input: None,
            kernel: None,
            kernel_file: None,
            window: WindowSetting::default(),
            freq_min: 0.0,
            freq_max: None,
            grid_size: 1000,
            method: MethodSelector::Bnse,
            training: TrainingMode::Fixed,
            restarts: train.restarts,
            max_iter: train.max_iter,
            bootstrap_from_lomb_scargle: train.bootstrap_from_lomb_scargle,
            out: PathBuf::from("out"),
            seed: 0,
            n_starts: 8,
            n_samples: 100,
            music: MusicConfig::default(),
            svg: true,
        }
    }
}

/// Flag values; `None` leaves the config untouched.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub input: Option<PathBuf>,
    pub kernel: Option<String>,
    pub alpha: Option<f64>,
    pub centre: Option<f64>,
    pub freq_min: Option<f64>,
    pub freq_max: Option<f64>,
    pub grid_size: Option<usize>,
    pub method: Option<MethodSelector>,
    pub train: bool,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("cannot read config {}", path.display()), e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    /// Config file (if any) with flags applied on top.
    pub fn load(config: Option<&Path>, flags: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match config {
            Some(p) => Self::from_json_file(p)?,
            None => Self::default(),
        };
        cfg.apply(flags)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, f: &Overrides) -> Result<(), CliError> {
        if let Some(v) = &f.input {
            self.input = Some(v.clone());
        }
        if let Some(k) = &f.kernel {
            if k.trim_start().starts_with('{') {
                let spec = ModelSpec::from_json(k).map_err(|e| CliError::Usage(format!("--kernel: {e}")))?;
                self.kernel = Some(spec);
            } else {
                self.kernel = None;
                self.kernel_file = Some(PathBuf::from(k));
            }
        }
        self.window.set(f.alpha, f.centre);
        if let Some(v) = f.freq_min {
            self.freq_min = v;
        }
        if let Some(v) = f.freq_max {
            self.freq_max = Some(v);
        }
        if let Some(v) = f.grid_size {
            self.grid_size = v;
        }
        if let Some(v) = f.method {
            self.method = v;
        }
        if f.train {
            self.training = TrainingMode::Train;
        }
        if let Some(v) = f.seed {
            self.seed = v;
        }
        if let Some(v) = &f.out {
            self.out = v.clone();
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Usage(m));
        if self.grid_size < 2 {
            return bad(format!("grid size must be >= 2, got {}", self.grid_size));
        }
        if !(self.freq_min.is_finite() && self.freq_min >= 0.0) {
            return bad(format!("freq-min must be >= 0, got {}", self.freq_min));
        }
        if let Some(hi) = self.freq_max {
            if !(hi.is_finite() && hi > self.freq_min) {
                return bad(format!("freq-max must exceed freq-min, got [{}, {hi}]", self.freq_min));
            }
        }
        if let WindowSetting::Manual { alpha: Some(a), .. } = self.window {
            if !(a > 0.0 && a.is_finite()) {
                return bad(format!("alpha must be > 0, got {a}"));
            }
        }
        if self.n_starts == 0 {
            return bad("n_starts must be >= 1".into());
        }
        if self.restarts == 0 {
            return bad("restarts must be >= 1".into());
        }
        Ok(())
    }

    pub fn grid(&self, data: &TimeSeries) -> Vec<f64> {
        let hi = self
            .freq_max
            .unwrap_or_else(|| data.nyquist_like().max(self.freq_min * 2.0 + 1e-12));
        linspace(self.freq_min, hi, self.grid_size)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            restarts: self.restarts,
            max_iter: self.max_iter,
            bootstrap_from_lomb_scargle: self.bootstrap_from_lomb_scargle,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }

    /// The configured model, or a broadband default scaled to the data.
    pub fn model(&self, data: &TimeSeries) -> Result<ModelSpec, CliError> {
        if let Some(k) = &self.kernel {
            return Ok(k.clone());
        }
        if let Some(p) = &self.kernel_file {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::io(format!("cannot read kernel {}", p.display()), e))?;
            return ModelSpec::from_json(&text).map_err(|e| CliError::Usage(format!("kernel {}: {e}", p.display())));
        }
        default_model(data).stage("model")
    }
}

/// Single baseband SM component with variance `var(y)`, lengthscale twice
/// the mean sampling step, and noise `0.1 var(y)`.
pub fn default_model(data: &TimeSeries) -> Result<ModelSpec, BnseError> {
    let var = data.variance().max(f64::MIN_POSITIVE.sqrt());
    let step = if data.len() > 1 {
        data.span() / (data.len() - 1) as f64
    } else {
        1.0
    };
    let kernel = SmKernel::squared_exponential(var, 2.0 * step)?;
    Ok(ModelSpec::new(kernel, NoiseModel::new(0.1 * var)?))
}
