use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use chrono::{DateTime, NaiveDate, NaiveDateTime};
use gpcompose::TimeSeriesDataset;

use crate::config::Split;

/// Fewest training rows a run accepts.
pub const MIN_TRAIN: usize = 5;

/// A parsed series with the time origin used for date columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub data: TimeSeriesDataset,
    /// First timestamp when the time column holds dates.
    pub origin: Option<NaiveDateTime>,
}

/// Time cell as a number, or as a date or datetime.
enum Stamp {
    Number(f64),
    Date(NaiveDateTime),
}

fn parse_stamp(cell: &str) -> Option<Stamp> {
    let cell = cell.trim();
    if let Ok(v) = cell.parse::<f64>() {
        return Some(Stamp::Number(v));
    }
    if let Ok(d) = NaiveDate::parse_from_str(cell, "%Y-%m-%d") {
        return d.and_hms_opt(0, 0, 0).map(Stamp::Date);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(cell) {
        return Some(Stamp::Date(dt.naive_utc()));
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(cell, f).ok())
        .map(Stamp::Date)
}

/// Days since `origin`, fractional.
fn day_offset(t: NaiveDateTime, origin: NaiveDateTime) -> f64 {
    (t - origin).num_milliseconds() as f64 / 86_400_000.0
}

pub fn ingest(path: &Path, time_column: &str, value_column: &str, split: Split) -> Result<Series> {
    let file = std::fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    ingest_reader(file, time_column, value_column, split)
}

pub fn ingest_reader(
    reader: impl std::io::Read,
    time_column: &str,
    value_column: &str,
    split: Split,
) -> Result<Series> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().context("cannot read CSV header")?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("missing column `{name}` (found: {})", headers.iter().collect::<Vec<_>>().join(", ")))
    };
    let (tc, vc) = (column(time_column)?, column(value_column)?);

    let mut stamps = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        // header is line 1
        let line = i + 2;
        let rec = rec.with_context(|| format!("malformed CSV at line {line}"))?;
        let cell = |c: usize| rec.get(c).unwrap_or("");
        let t = parse_stamp(cell(tc))
            .ok_or_else(|| anyhow!("line {line}, column `{time_column}`: cannot parse `{}` as a number or date", cell(tc)))?;
        let v: f64 = cell(vc)
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| anyhow!("line {line}, column `{value_column}`: cannot parse `{}` as a number", cell(vc)))?;
        stamps.push(t);
        values.push(v);
    }
    if stamps.is_empty() {
        bail!("CSV has no data rows");
    }

    let origin = match stamps[0] {
        Stamp::Date(d) => Some(d),
        Stamp::Number(_) => None,
    };
    let times = stamps
        .iter()
        .enumerate()
        .map(|(i, s)| match (s, origin) {
            (Stamp::Number(v), None) => Ok(*v),
            (Stamp::Date(d), Some(o)) => Ok(day_offset(*d, o)),
            _ => Err(anyhow!("line {}: time column mixes numbers and dates", i + 2)),
        })
        .collect::<Result<Vec<f64>>>()?;
    if let Some(i) = times.windows(2).position(|w| w[1] <= w[0]) {
        bail!("times are not strictly increasing at line {}", i + 3);
    }

    let n_test = split.test_count(times.len())?;
    let n_train = times.len() - n_test;
    if n_train < MIN_TRAIN {
        bail!("need at least {MIN_TRAIN} training rows, got {n_train}");
    }
    Ok(Series {
        data: TimeSeriesDataset::new(times, values, n_train)?,
        origin,
    })
}
