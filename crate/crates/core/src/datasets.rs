//! Bundled data.

use crate::error::{BnseError, Result};
use crate::gp::TimeSeries;

const SUNSPOTS: &str = include_str!("../data/sunspots.csv");

/// Parses `year,count` rows (no header) into a series in years.
pub fn parse_yearly(text: &str) -> Result<TimeSeries> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split(',').map(|c| c.trim().parse::<f64>());
        match (cols.next(), cols.next(), cols.next()) {
            (Some(Ok(t)), Some(Ok(y)), None) => pairs.push((t, y)),
            _ => {
                return Err(BnseError::InvalidInput(format!(
                    "line {}: expected `year,count`, got `{line}`",
                    i + 1
                )))
            }
        }
    }
    TimeSeries::from_unsorted(pairs)
}

/// Yearly mean sunspot numbers, 1700 to 2008.
pub fn sunspots() -> TimeSeries {
    parse_yearly(SUNSPOTS).expect("bundled sunspot data is well formed")
}
