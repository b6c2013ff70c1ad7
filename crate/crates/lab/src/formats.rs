//! CSV and JSON artifacts. Reals are written with 17 significant digits so
//! that parsing an emitted file restores every value exactly.

use std::fmt::Write as _;
use std::path::Path;

use collapse_core::{EmbeddingSet, TrainHistory};
use serde::Serialize;

use crate::error::{write_file, LabError, Result};
use crate::sweep::{SweepResult, SweepRow};

pub const SWEEP_HEADER: &str = "alpha,tau,seed,delta_star,theory_within,empirical_within,\
empirical_between,final_loss,closed_form_optimal_loss,abs_gap";

pub const HISTORY_HEADER: &str = "epoch,loss,avg_within_var,between_var";

/// `{:.16e}`, which `str::parse::<f64>` reads back bit for bit. NaN and
/// the infinities print as `NaN`, `inf` and `-inf`.
pub fn real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

pub fn sweep_csv(result: &SweepResult) -> String {
    let mut out = String::with_capacity(64 * (result.rows.len() + 1));
    out.push_str(SWEEP_HEADER);
    out.push('\n');
    for r in &result.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            real(r.alpha),
            real(r.tau),
            r.seed,
            real(r.delta_star),
            real(r.theory_within),
            real(r.empirical_within),
            real(r.empirical_between),
            real(r.final_loss),
            real(r.closed_form_optimal_loss),
            real(r.abs_gap),
        );
    }
    out
}

pub fn emit_csv(result: &SweepResult, path: &Path) -> Result<()> {
    write_file(path, &sweep_csv(result))
}

fn csv_err(line: u64, msg: impl std::fmt::Display) -> LabError {
    LabError::Csv(format!("line {line}: {msg}"))
}

pub fn parse_sweep_csv(text: &str) -> Result<SweepResult> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| csv_err(1, e))?;
    if header.iter().collect::<Vec<_>>().join(",") != SWEEP_HEADER {
        return Err(csv_err(1, "unexpected header"));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| LabError::Csv(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let f = |k: usize| -> Result<f64> {
            record[k].parse::<f64>().map_err(|e| csv_err(line, format!("column {}: {e}", k + 1)))
        };
        rows.push(SweepRow {
            alpha: f(0)?,
            tau: f(1)?,
            seed: record[2].parse().map_err(|e| csv_err(line, format!("seed: {e}")))?,
            delta_star: f(3)?,
            theory_within: f(4)?,
            empirical_within: f(5)?,
            empirical_between: f(6)?,
            final_loss: f(7)?,
            closed_form_optimal_loss: f(8)?,
            abs_gap: f(9)?,
        });
    }
    Ok(SweepResult { rows })
}

pub fn read_sweep_csv(path: &Path) -> Result<SweepResult> {
    let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    parse_sweep_csv(&text).map_err(|e| LabError::Csv(format!("{}: {e}", path.display())))
}

/// One row per embedding: `class,instance,aug,c0,c1,…`.
pub fn embeddings_csv(u: &EmbeddingSet) -> String {
    let mut out = String::from("class,instance,aug");
    for c in 0..u.dim() {
        let _ = write!(out, ",c{c}");
    }
    out.push('\n');
    for (r, row) in u.rows().enumerate() {
        let pos = u.position(r);
        let _ = write!(out, "{},{},{}", pos.class, pos.instance, pos.aug);
        for &x in row {
            out.push(',');
            out.push_str(&real(x));
        }
        out.push('\n');
    }
    out
}

pub fn history_csv(history: &TrainHistory) -> String {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for r in &history.records {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.epoch,
            real(r.loss),
            real(r.avg_within_var),
            real(r.between_var)
        );
    }
    out
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| LabError::Json { path: path.to_path_buf(), source: e })?;
    write_file(path, &(text + "\n"))
}
