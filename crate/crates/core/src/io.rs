//! CSV emission and ingestion for the pipeline artifacts.
//!
//! All writers go through a temp-file-then-rename sequence so a crashed or
//! interrupted run never leaves a half-written artifact behind, and all
//! numbers are printed with twelve significant digits so artifacts
//! round-trip losslessly enough for downstream plotting and for the
//! threshold files the evaluator reads back.

use crate::filter::{ChainPath, FilterPath};
use crate::hjb::{IterationRecord, PolicyGrid, ThresholdCurve, ValueGrid};
use crate::montecarlo::PathOutcome;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

/// Errors from reading or writing artifact files.
#[derive(Debug, thiserror::Error)]
pub enum IoError {
    /// The file could not be created, written, renamed, or read.
    #[error("{path}: {reason}")]
    File { path: String, reason: String },
    /// The file was read but its contents are not a valid artifact.
    #[error("{path}: {reason}")]
    Malformed { path: String, reason: String },
}

fn file_err(path: &Path, err: impl std::fmt::Display) -> IoError {
    IoError::File {
        path: path.display().to_string(),
        reason: err.to_string(),
    }
}

fn malformed(path: &Path, reason: impl Into<String>) -> IoError {
    IoError::Malformed {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// Formats a number with twelve significant digits; exact zero prints as
/// `0` and infinities print as `inf`/`-inf` (which `f64` parsing accepts).
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    if x.is_nan() {
        return "nan".to_string();
    }
    format!("{x:.11e}")
}

/// Writes `header` plus `rows` to `path` atomically: the content goes to a
/// temporary file in the same directory which is renamed over the target
/// only after a successful flush.
pub fn write_csv_atomic(
    path: &Path,
    header: &str,
    rows: impl IntoIterator<Item = String>,
) -> Result<(), IoError> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(d) => tempfile::NamedTempFile::new_in(d),
        None => tempfile::NamedTempFile::new(),
    }
    .map_err(|e| file_err(path, e))?;
    {
        let w = tmp.as_file_mut();
        writeln!(w, "{header}").map_err(|e| file_err(path, e))?;
        for row in rows {
            writeln!(w, "{row}").map_err(|e| file_err(path, e))?;
        }
        w.flush().map_err(|e| file_err(path, e))?;
    }
    tmp.persist(path).map_err(|e| file_err(path, e.error))?;
    Ok(())
}

/// Writes the solved value surface and policy, one row per node with the
/// drift-estimate coordinate outermost: `upsilon,x,V,u`.
pub fn write_value_csv(
    path: &Path,
    value: &ValueGrid,
    policy: &PolicyGrid,
) -> Result<(), IoError> {
    let mesh = &value.mesh;
    let mut rows = Vec::with_capacity(mesh.n_nodes());
    for j in 0..=mesh.n_u() {
        for i in 0..=mesh.n_x() {
            rows.push(format!(
                "{},{},{},{}",
                fmt_sig(mesh.us[j]),
                fmt_sig(mesh.xs[i]),
                fmt_sig(value.at(i, j)),
                fmt_sig(policy.at(i, j)),
            ));
        }
    }
    write_csv_atomic(path, "upsilon,x,V,u", rows)
}

/// Writes a threshold curve as `upsilon,b`; a never-pay column prints
/// `inf`.
pub fn write_threshold_csv(path: &Path, curve: &ThresholdCurve) -> Result<(), IoError> {
    let rows = curve
        .us
        .iter()
        .zip(&curve.b)
        .map(|(&u, &b)| format!("{},{}", fmt_sig(u), fmt_sig(b)))
        .collect::<Vec<_>>();
    write_csv_atomic(path, "upsilon,b", rows)
}

/// Reads a threshold curve written by [`write_threshold_csv`] (or by hand:
/// a `upsilon,b` header and one pair per line, `inf` allowed for `b`).
pub fn read_threshold_csv(path: &Path) -> Result<ThresholdCurve, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| file_err(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| malformed(path, "empty file"))?;
    if header.trim() != "upsilon,b" {
        return Err(malformed(
            path,
            format!("expected header 'upsilon,b', found '{}'", header.trim()),
        ));
    }
    let mut us = Vec::new();
    let mut b = Vec::new();
    for (lineno, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let (Some(u_str), Some(b_str), None) = (parts.next(), parts.next(), parts.next())
        else {
            return Err(malformed(
                path,
                format!("line {}: expected two comma-separated fields", lineno + 1),
            ));
        };
        let u: f64 = u_str
            .trim()
            .parse()
            .map_err(|e| malformed(path, format!("line {}: {e}", lineno + 1)))?;
        let bv: f64 = b_str
            .trim()
            .parse()
            .map_err(|e| malformed(path, format!("line {}: {e}", lineno + 1)))?;
        us.push(u);
        b.push(bv);
    }
    ThresholdCurve::new(us, b).map_err(|e| malformed(path, e.to_string()))
}

/// Writes the policy-iteration progress log as
/// `k,policy_changes,value_delta,min_increment`.
pub fn write_iterations_csv(path: &Path, log: &[IterationRecord]) -> Result<(), IoError> {
    let rows = log
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{}",
                r.k,
                r.policy_changes,
                fmt_sig(r.value_delta),
                fmt_sig(r.min_increment),
            )
        })
        .collect::<Vec<_>>();
    write_csv_atomic(path, "k,policy_changes,value_delta,min_increment", rows)
}

/// Writes an aligned (chain, filter) simulation as
/// `t,state,mu_true,nu,pi_1..pi_{M-1},dZ`.
///
/// States are one-based in the file. The observation column holds the
/// increment covering `[t_k, t_{k+1}]`, so the final row leaves it empty.
pub fn write_filter_csv(
    path: &Path,
    mu: &[f64],
    chain: &ChainPath,
    filter: &FilterPath,
) -> Result<(), IoError> {
    let n = filter.times.len();
    if chain.times.len() != n || chain.states.len() != n || filter.observations.len() + 1 != n
    {
        return Err(malformed(path, "chain and filter grids are not aligned"));
    }
    let m = filter.pis[0].m();
    let mut header = String::from("t,state,mu_true,nu");
    for i in 1..m {
        let _ = write!(header, ",pi_{i}");
    }
    header.push_str(",dZ");
    let mut rows = Vec::with_capacity(n);
    for k in 0..n {
        let mut row = format!(
            "{},{},{},{}",
            fmt_sig(filter.times[k]),
            chain.states[k] + 1,
            fmt_sig(mu[chain.states[k]]),
            fmt_sig(filter.nus[k]),
        );
        for h in filter.pis[k].head() {
            let _ = write!(row, ",{}", fmt_sig(*h));
        }
        if k + 1 < n {
            let _ = write!(row, ",{}", fmt_sig(filter.observations[k]));
        } else {
            row.push(',');
        }
        rows.push(row);
    }
    write_csv_atomic(path, &header, rows)
}

/// Writes per-path Monte-Carlo outcomes as `path,discounted_payout,ruin_time`
/// with an empty ruin column for surviving paths.
pub fn write_paths_csv(path: &Path, outcomes: &[PathOutcome]) -> Result<(), IoError> {
    let rows = outcomes
        .iter()
        .enumerate()
        .map(|(i, o)| match o.ruin_time {
            Some(tau) => format!("{},{},{}", i, fmt_sig(o.payout), fmt_sig(tau)),
            None => format!("{},{},", i, fmt_sig(o.payout)),
        })
        .collect::<Vec<_>>();
    write_csv_atomic(path, "path,discounted_payout,ruin_time", rows)
}
