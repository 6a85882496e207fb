//! Turns a long `timestamp,value` CSV into one curve per calendar day.
//!
//! A day is kept only when it has exactly `d` readings (the grid length);
//! partial days — missing sensors, daylight-saving shifts — are dropped and
//! counted, never imputed. Readings within a day are ordered by timestamp
//! and assigned to grid points left to right.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use chrono::{NaiveDate, NaiveDateTime};
use fdlm::kernel::Grid;
use fdlm::statespace::FunctionalSeries;
use nalgebra::DMatrix;
use serde::Deserialize;

#[derive(Debug, Deserialize)]
struct RawRow {
    timestamp: String,
    value: f64,
}

/// What happened during ingestion; `days * d + dropped_rows = total_rows`.
#[derive(Debug, Clone)]
pub struct IngestReport {
    pub days: usize,
    pub dropped_rows: usize,
    pub total_rows: usize,
    pub grid_len: usize,
    pub first_timestamp: String,
    pub last_timestamp: String,
    /// Dates that had readings but not exactly `d` of them.
    pub incomplete_days: Vec<NaiveDate>,
}

fn parse_timestamp(raw: &str, line: usize) -> Result<NaiveDateTime> {
    // ISO-8601 with a 'T', with a space as a lenient fallback.
    raw.parse::<NaiveDateTime>()
        .or_else(|_| NaiveDateTime::parse_from_str(raw, "%Y-%m-%d %H:%M:%S"))
        .with_context(|| format!("row {line}: cannot parse timestamp {raw:?}"))
}

/// Read and reshape a CSV of readings into a daily functional series.
pub fn ingest(
    path: &Path,
    grid: &Grid,
    log_transform: bool,
) -> Result<(FunctionalSeries, IngestReport)> {
    let d = grid.len();
    let mut reader =
        csv::Reader::from_path(path).with_context(|| format!("cannot open {}", path.display()))?;

    let mut by_day: BTreeMap<NaiveDate, Vec<(NaiveDateTime, f64)>> = BTreeMap::new();
    let mut total_rows = 0usize;
    let mut first: Option<NaiveDateTime> = None;
    let mut last: Option<NaiveDateTime> = None;

    for (i, row) in reader.deserialize::<RawRow>().enumerate() {
        // Header is line 1; data starts at line 2.
        let line = i + 2;
        let row = row.with_context(|| format!("row {line}: malformed record"))?;
        let stamp = parse_timestamp(&row.timestamp, line)?;
        if !row.value.is_finite() {
            bail!("row {line}: value {} is not finite", row.value);
        }
        let value = if log_transform {
            if row.value <= 0.0 {
                bail!(
                    "row {line}: value {} is not positive; log transform needs positive readings",
                    row.value
                );
            }
            row.value.ln()
        } else {
            row.value
        };
        total_rows += 1;
        first = Some(first.map_or(stamp, |f| f.min(stamp)));
        last = Some(last.map_or(stamp, |l| l.max(stamp)));
        by_day.entry(stamp.date()).or_default().push((stamp, value));
    }

    let mut curves = Vec::new();
    let mut labels = Vec::new();
    let mut incomplete_days = Vec::new();
    let mut dropped_rows = 0usize;
    for (date, mut readings) in by_day {
        if readings.len() != d {
            dropped_rows += readings.len();
            incomplete_days.push(date);
            continue;
        }
        readings.sort_by_key(|(stamp, _)| *stamp);
        curves.push(readings.into_iter().map(|(_, v)| v).collect::<Vec<_>>());
        labels.push(date.to_string());
    }
    if curves.is_empty() {
        bail!(
            "{}: no complete day of {d} readings found ({total_rows} rows, {} incomplete days)",
            path.display(),
            incomplete_days.len()
        );
    }

    let matrix = DMatrix::from_fn(curves.len(), d, |t, j| curves[t][j]);
    let series = FunctionalSeries::new(grid.clone(), matrix, Some(labels))?;
    let report = IngestReport {
        days: series.len(),
        dropped_rows,
        total_rows,
        grid_len: d,
        first_timestamp: first.map(|f| f.to_string()).unwrap_or_default(),
        last_timestamp: last.map(|l| l.to_string()).unwrap_or_default(),
        incomplete_days,
    };
    debug_assert_eq!(report.days * d + report.dropped_rows, report.total_rows);
    Ok((series, report))
}

impl std::fmt::Display for IngestReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} complete days of {} readings ({} rows dropped from {} incomplete days), spanning {} to {}",
            self.days,
            self.grid_len,
            self.dropped_rows,
            self.incomplete_days.len(),
            self.first_timestamp,
            self.last_timestamp
        )
    }
}
