use std::path::Path;

use bnse::{BnseError, TimeSeries};

use crate::error::{CliError, StageExt};

/// Reads a two-column `t,y` CSV (header optional) into a time-sorted series.
///
/// Rows are sorted stably by time; repeated timestamps are rejected with
/// both line numbers.
pub fn ingest_csv(path: &Path) -> Result<TimeSeries, CliError> {
    let file =
        std::fs::File::open(path).map_err(|e| CliError::io(format!("cannot open input {}", path.display()), e))?;
    let series = parse_csv(file).stage("ingest")?;
    log::info!(
        "read {} rows from {} (span {})",
        series.len(),
        path.display(),
        series.span()
    );
    Ok(series)
}

pub fn parse_csv<R: std::io::Read>(input: R) -> Result<TimeSeries, BnseError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(input);
    let mut rows: Vec<(f64, f64, u64)> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(i as u64 + 1, |p| p.line());
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != 2 {
            return Err(BnseError::InvalidInput(format!(
                "line {line}: expected 2 columns, found {}",
                rec.len()
            )));
        }
        let t = rec[0].parse::<f64>();
        let y = rec[1].parse::<f64>();
        match (t, y) {
            (Ok(t), Ok(y)) if t.is_finite() && y.is_finite() => rows.push((t, y, line)),
            (Err(_), Err(_)) if rows.is_empty() && i == 0 => continue,
            _ => {
                return Err(BnseError::InvalidInput(format!(
                    "line {line}: cannot parse `{},{}` as two finite numbers",
                    &rec[0], &rec[1]
                )))
            }
        }
    }
    if rows.is_empty() {
        return Err(BnseError::InvalidInput("input has no data rows".into()));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        let (a, b) = (w[0].2.min(w[1].2), w[0].2.max(w[1].2));
        return Err(BnseError::InvalidInput(format!(
            "duplicate time {} on line {b} (first seen on line {a})",
            w[0].0
        )));
    }
    TimeSeries::new(rows.iter().map(|r| r.0).collect(), rows.iter().map(|r| r.1).collect())
}

/// Writes a series as `t,y`.
pub fn write_series<W: std::io::Write>(series: &TimeSeries, out: W) -> Result<(), BnseError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "y"])?;
    for (t, y) in series.times().iter().zip(series.values()) {
        w.write_record([t.to_string(), y.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn headerless_pairs() {
        let s = parse_csv("0,1\n1,2".as_bytes()).unwrap();
        assert_eq!(s.times(), &[0.0, 1.0]);
        assert_eq!(s.values(), &[1.0, 2.0]);
    }

    #[test]
    fn header_and_unsorted_rows() {
        let s = parse_csv("t,y\n2,20\n0,0\n1,10\n".as_bytes()).unwrap();
        assert_eq!(s.times(), &[0.0, 1.0, 2.0]);
        assert_eq!(s.values(), &[0.0, 10.0, 20.0]);
    }

    #[test]
    fn duplicate_time_names_line() {
        let err = parse_csv("t,y\n0,1\n1,2\n0,3\n".as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 4") && err.contains("line 2"), "{err}");
    }

    #[test]
    fn malformed_row_names_line() {
        let err = parse_csv("0,1\n1,x\n".as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        let err = parse_csv("0,1\n1,2,3\n".as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn empty_input_rejected() {
        assert!(parse_csv("".as_bytes()).is_err());
        assert!(parse_csv("t,y\n".as_bytes()).is_err());
    }

    #[test]
    fn round_trip() {
        let s = TimeSeries::new(vec![0.1, 0.7, 3.0], vec![1.0 / 3.0, -2.5e-12, 7.0]).unwrap();
        let mut buf = Vec::new();
        write_series(&s, &mut buf).unwrap();
        assert_eq!(parse_csv(buf.as_slice()).unwrap(), s);
    }
}
