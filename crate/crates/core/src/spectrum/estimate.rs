use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{BnseError, Result};

/// Which estimator produced a `SpectrumEstimate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Bnse,
    LombScargle,
    Periodogram,
    Music,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Bnse => "bnse",
            Method::LombScargle => "ls",
            Method::Periodogram => "periodogram",
            Method::Music => "music",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = BnseError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bnse" => Ok(Method::Bnse),
            "ls" | "lomb_scargle" | "lomb-scargle" => Ok(Method::LombScargle),
            "periodogram" => Ok(Method::Periodogram),
            "music" => Ok(Method::Music),
            other => Err(BnseError::InvalidInput(format!("unknown method `{other}`"))),
        }
    }
}

pub const CSV_HEADER: [&str; 6] = ["freq", "mean_re", "mean_im", "var_re", "var_im", "psd_mean"];

/// Spectrum on a frequency grid, in the format shared by every estimator.
///
/// Point estimators leave the mean and variance columns at zero and put
/// their power in `psd_mean`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumEstimate {
    pub method: Method,
    pub grid: Vec<f64>,
    pub mean_re: Vec<f64>,
    pub mean_im: Vec<f64>,
    pub var_re: Vec<f64>,
    pub var_im: Vec<f64>,
    pub psd_mean: Vec<f64>,
    /// Standard deviation of the PSD; zero for point estimators. Not part of the CSV.
    pub psd_std: Vec<f64>,
}

impl SpectrumEstimate {
    /// Estimate with power only.
    pub fn point(method: Method, grid: Vec<f64>, power: Vec<f64>) -> Self {
        let n = grid.len();
        Self {
            method,
            grid,
            mean_re: vec![0.0; n],
            mean_im: vec![0.0; n],
            var_re: vec![0.0; n],
            var_im: vec![0.0; n],
            psd_mean: power,
            psd_std: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// `psd_mean ± k psd_std`, with the lower edge floored at zero.
    pub fn band(&self, k: f64) -> (Vec<f64>, Vec<f64>) {
        self.psd_mean
            .iter()
            .zip(&self.psd_std)
            .map(|(m, s)| ((m - k * s).max(0.0), m + k * s))
            .unzip()
    }

    /// Writes `freq,mean_re,mean_im,var_re,var_im,psd_mean` with shortest
    /// round-trip decimal formatting.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for i in 0..self.len() {
            w.write_record([
                self.grid[i].to_string(),
                self.mean_re[i].to_string(),
                self.mean_im[i].to_string(),
                self.var_re[i].to_string(),
                self.var_im[i].to_string(),
                self.psd_mean[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV written by `write_csv`. `psd_std` comes back as zeros.
    pub fn read_csv<R: Read>(input: R, method: Method) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header != CSV_HEADER {
            return Err(BnseError::InvalidInput(format!(
                "unexpected spectrum header {header:?}"
            )));
        }
        let mut est = SpectrumEstimate::point(method, Vec::new(), Vec::new());
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| BnseError::InvalidInput(format!("bad number in spectrum row {}", line + 2)))
            };
            est.grid.push(parse(0)?);
            est.mean_re.push(parse(1)?);
            est.mean_im.push(parse(2)?);
            est.var_re.push(parse(3)?);
            est.var_im.push(parse(4)?);
            est.psd_mean.push(parse(5)?);
            est.psd_std.push(0.0);
        }
        Ok(est)
    }

    /// Writes `freq,psd_mean,psd_std,psd_lower,psd_upper` for a `k`-sigma band.
    pub fn write_band_csv<W: Write>(&self, out: W, k: f64) -> Result<()> {
        let (lo, hi) = self.band(k);
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["freq", "psd_mean", "psd_std", "psd_lower", "psd_upper"])?;
        for i in 0..self.len() {
            w.write_record([
                self.grid[i].to_string(),
                self.psd_mean[i].to_string(),
                self.psd_std[i].to_string(),
                lo[i].to_string(),
                hi[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `n` evenly spaced points on `[lo, hi]` (just `lo` when `n == 1`).
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}
