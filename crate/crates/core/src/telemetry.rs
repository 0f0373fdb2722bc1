//! Per-round telemetry files.
//!
//! Files are written to a temporary sibling and renamed into place, so a
//! failed write never leaves a partial file behind.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::RunResult;

pub const CSV_HEADER: &str =
    "round,selected_ids,t_down_s,t_round_s,flight_j_cum,dissem_j_cum,total_j_cum,test_accuracy,test_loss";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::invalid(format!("unknown format `{other}` (csv|json)"))),
        }
    }
}

/// 17 significant digits in scientific notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV body; `round` is 1-based.
pub fn to_csv(result: &RunResult) -> String {
    let mut out = String::with_capacity(64 + result.records.len() * 220);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &result.records {
        let ids = r
            .selected
            .iter()
            .map(|id| id.to_string())
            .collect::<Vec<_>>()
            .join(";");
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.round_index + 1,
            ids,
            fmt_f64(r.timing.t_down_s),
            fmt_f64(r.timing.t_round_s),
            fmt_f64(r.cumulative_flight_j),
            fmt_f64(r.cumulative_dissemination_j),
            fmt_f64(r.cumulative_total_j()),
            fmt_f64(r.test_accuracy),
            fmt_f64(r.test_loss),
        )
        .unwrap();
    }
    out
}

pub fn to_json(result: &RunResult) -> String {
    let mut s = serde_json::to_string_pretty(result).expect("run result serializes");
    s.push('\n');
    s
}

pub fn render(result: &RunResult, format: Format) -> String {
    match format {
        Format::Csv => to_csv(result),
        Format::Json => to_json(result),
    }
}

/// Writes `contents` to `path` via a temp file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.flush().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn emit(result: &RunResult, format: Format, path: &Path) -> Result<()> {
    write_atomic(path, render(result, format).as_bytes())
}
