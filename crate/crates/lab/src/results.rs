//! Result tables and training logs as CSV, with strict schema checkers.

use std::path::Path;

use beamlab_core::nets::{EpochRecord, Scheme, SchemeScore};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

pub const RESULT_COLUMNS: [&str; 8] = [
    "axis",
    "value",
    "scheme",
    "mean_rate",
    "stderr",
    "mean_nmse",
    "count",
    "status",
];
pub const LOG_COLUMNS: [&str; 6] = ["epoch", "L_H", "L_P", "val_rate", "val_NMSE", "wall_time"];

/// Axis label of rows that do not belong to a sweep.
pub const NO_AXIS: &str = "none";
pub const AXES: [&str; 6] = [NO_AXIS, "users", "antennas", "pilots", "power_db", "cells"];

/// One scheme at one sweep value. Failed points carry no statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub axis: String,
    pub value: Option<f64>,
    pub scheme: String,
    pub mean_rate: Option<f64>,
    pub stderr: Option<f64>,
    pub mean_nmse: Option<f64>,
    pub count: usize,
    pub status: String,
}

impl ResultRow {
    pub fn from_score(axis: &str, value: Option<f64>, s: &SchemeScore) -> Self {
        ResultRow {
            axis: axis.to_string(),
            value,
            scheme: s.scheme.name().to_string(),
            mean_rate: Some(s.mean()),
            stderr: Some(s.stderr()),
            mean_nmse: s.nmse,
            count: s.rates.len(),
            status: "ok".to_string(),
        }
    }

    pub fn failed(axis: &str, value: Option<f64>, scheme: Scheme, why: &str) -> Self {
        ResultRow {
            axis: axis.to_string(),
            value,
            scheme: scheme.name().to_string(),
            mean_rate: None,
            stderr: None,
            mean_nmse: None,
            count: 0,
            status: format!("failed: {}", why.replace(['\n', '\r'], " ")),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:?}"))
}

impl ResultTable {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(RESULT_COLUMNS).expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.axis.clone(),
                fmt_opt(r.value),
                r.scheme.clone(),
                fmt_opt(r.mean_rate),
                fmt_opt(r.stderr),
                fmt_opt(r.mean_nmse),
                r.count.to_string(),
                r.status.clone(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(LabError::io(dir))?;
        let csv = dir.join(format!("{stem}.csv"));
        std::fs::write(&csv, self.to_csv()).map_err(LabError::io(&csv))?;
        let json = dir.join(format!("{stem}.json"));
        std::fs::write(&json, self.to_json() + "\n").map_err(LabError::io(&json))
    }

    /// Parses a result CSV, enforcing the schema of [`check_results_csv`].
    pub fn from_csv(text: &str) -> std::result::Result<Self, String> {
        check_results_csv(text)
    }
}

fn records(text: &str, columns: &[&str]) -> std::result::Result<Vec<csv::StringRecord>, String> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().ne(columns.iter().copied()) {
        return Err(format!(
            "header {:?} differs from {:?}",
            header.iter().collect::<Vec<_>>(),
            columns
        ));
    }
    r.records().map(|x| x.map_err(|e| e.to_string())).collect()
}

fn number(field: &str, what: &str, line: usize) -> std::result::Result<f64, String> {
    let v: f64 = field
        .parse()
        .map_err(|_| format!("line {line}: {what} {field:?} is not a number"))?;
    if !v.is_finite() {
        return Err(format!("line {line}: {what} is not finite"));
    }
    Ok(v)
}

fn optional(field: &str, what: &str, line: usize) -> std::result::Result<Option<f64>, String> {
    if field.is_empty() {
        Ok(None)
    } else {
        number(field, what, line).map(Some)
    }
}

/// Strict checker for result CSVs: exact header, registry scheme names,
/// finite statistics on `ok` rows (count ≥ 1), empty statistics and a
/// zero count on `failed: ...` rows.
pub fn check_results_csv(text: &str) -> std::result::Result<ResultTable, String> {
    let mut rows = Vec::new();
    for (i, rec) in records(text, &RESULT_COLUMNS)?.into_iter().enumerate() {
        let line = i + 2;
        let f: Vec<&str> = rec.iter().collect();
        if !AXES.contains(&f[0]) {
            return Err(format!("line {line}: unknown axis {:?}", f[0]));
        }
        let value = optional(f[1], "value", line)?;
        if (f[0] == NO_AXIS) != value.is_none() {
            return Err(format!("line {line}: a value is required exactly for sweep rows"));
        }
        Scheme::parse(f[2]).map_err(|_| format!("line {line}: unknown scheme {:?}", f[2]))?;
        let mean_rate = optional(f[3], "mean_rate", line)?;
        let stderr = optional(f[4], "stderr", line)?;
        let mean_nmse = optional(f[5], "mean_nmse", line)?;
        let count: usize = f[6]
            .parse()
            .map_err(|_| format!("line {line}: count {:?} is not an integer", f[6]))?;
        let status = f[7];
        if status == "ok" {
            if mean_rate.is_none() || stderr.is_none_or(|s| s < 0.0) || count == 0 {
                return Err(format!(
                    "line {line}: ok rows need a rate, a nonnegative stderr and count >= 1"
                ));
            }
            if mean_nmse.is_some_and(|x| x < 0.0) {
                return Err(format!("line {line}: negative NMSE"));
            }
        } else if status.starts_with("failed") {
            if mean_rate.is_some() || stderr.is_some() || mean_nmse.is_some() || count != 0 {
                return Err(format!("line {line}: failed rows carry no statistics"));
            }
        } else {
            return Err(format!("line {line}: unknown status {status:?}"));
        }
        rows.push(ResultRow {
            axis: f[0].to_string(),
            value,
            scheme: f[2].to_string(),
            mean_rate,
            stderr,
            mean_nmse,
            count,
            status: status.to_string(),
        });
    }
    Ok(ResultTable { rows })
}

/// One training-log row: the record plus seconds since training started.
pub fn log_row(r: &EpochRecord, wall_time: f64) -> [String; 6] {
    [
        r.epoch.to_string(),
        fmt_opt(r.loss_channel),
        fmt_opt(r.loss_power),
        fmt_opt(r.val_rate),
        fmt_opt(r.val_nmse),
        format!("{wall_time:?}"),
    ]
}

pub fn log_header() -> String {
    LOG_COLUMNS.join(",") + "\n"
}

pub fn log_line(r: &EpochRecord, wall_time: f64) -> String {
    log_row(r, wall_time).join(",") + "\n"
}

/// Strict checker for training logs: exact header, consecutive epoch
/// numbers, finite nonnegative losses and wall times. Returns the epochs.
pub fn check_train_log_csv(text: &str) -> std::result::Result<Vec<usize>, String> {
    let mut epochs: Vec<usize> = Vec::new();
    for (i, rec) in records(text, &LOG_COLUMNS)?.into_iter().enumerate() {
        let line = i + 2;
        let f: Vec<&str> = rec.iter().collect();
        let epoch: usize = f[0].parse().map_err(|_| format!("line {line}: bad epoch {:?}", f[0]))?;
        if epochs.last().is_some_and(|e| epoch != e + 1) || epoch == 0 {
            return Err(format!("line {line}: epoch {epoch} breaks the sequence"));
        }
        for (idx, what) in [(1, "L_H"), (2, "L_P"), (4, "val_NMSE")] {
            if optional(f[idx], what, line)?.is_some_and(|v| v < 0.0) {
                return Err(format!("line {line}: negative {what}"));
            }
        }
        optional(f[3], "val_rate", line)?;
        if number(f[5], "wall_time", line)? < 0.0 {
            return Err(format!("line {line}: negative wall time"));
        }
        epochs.push(epoch);
    }
    Ok(epochs)
}
