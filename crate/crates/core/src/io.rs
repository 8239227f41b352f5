//! Run artifacts: `state.csv`, `diag.csv`, `events.csv` and `manifest.json`.
//!
//! Floats are written in Rust's shortest round-trip form, so reading a file
//! back reproduces every value bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::DiagRow;
use crate::integrator::{Event, Trajectory};
use crate::model::ShellState;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub const STATE_FILE: &str = "state.csv";
pub const DIAG_FILE: &str = "diag.csv";
pub const EVENTS_FILE: &str = "events.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

/// Shortest string that parses back to exactly `x`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn write_lines(path: &Path, header: &str, rows: impl Iterator<Item = String>) -> Result<(), IoError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{header}").map_err(io_err(path))?;
    for row in rows {
        writeln!(w, "{row}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_state_csv(path: &Path, samples: &[ShellState]) -> Result<(), IoError> {
    let n = samples.first().map_or(0, |s| s.u.len());
    let mut header = String::from("t");
    for j in 0..n {
        write!(header, ",u{j}").unwrap();
    }
    write_lines(
        path,
        &header,
        samples.iter().map(|s| {
            let mut line = fmt_f64(s.t);
            for &x in &s.u {
                line.push(',');
                line.push_str(&fmt_f64(x));
            }
            line
        }),
    )
}

/// Column name for an extra Sobolev index, e.g. `h1.5`.
pub fn sobolev_column(r: f64) -> String {
    if r.fract() == 0.0 && r.abs() < 1e15 {
        format!("h{}", r as i64)
    } else {
        format!("h{r}")
    }
}

pub fn write_diag_csv(path: &Path, rows: &[DiagRow], extra: &[f64]) -> Result<(), IoError> {
    let mut header = String::from("t,energy,h1,hs,sup_scaled,argmax_j");
    for &r in extra {
        header.push(',');
        header.push_str(&sobolev_column(r));
    }
    write_lines(
        path,
        &header,
        rows.iter().map(|d| {
            let mut line = [d.t, d.energy, d.h1, d.hs, d.sup_scaled].map(fmt_f64).join(",");
            write!(line, ",{}", d.argmax).unwrap();
            for &x in &d.extra {
                line.push(',');
                line.push_str(&fmt_f64(x));
            }
            line
        }),
    )
}

pub fn write_events_csv(path: &Path, events: &[Event]) -> Result<(), IoError> {
    write_lines(path, "j,t_j", events.iter().map(|e| format!("{},{}", e.level, fmt_f64(e.t))))
}

/// Writes `state.csv`, `diag.csv` and `events.csv` into `dir` (created if
/// missing) and returns the file names.
pub fn emit_timeseries(dir: &Path, traj: &Trajectory, diag: &[DiagRow], extra: &[f64]) -> Result<Vec<String>, IoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_state_csv(&dir.join(STATE_FILE), &traj.samples)?;
    write_diag_csv(&dir.join(DIAG_FILE), diag, extra)?;
    write_events_csv(&dir.join(EVENTS_FILE), &traj.events)?;
    Ok(vec![STATE_FILE.into(), DIAG_FILE.into(), EVENTS_FILE.into()])
}

fn read_rows(path: &Path) -> Result<(String, Vec<(usize, String)>), IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .map(|(_, h)| h.to_string())
        .ok_or_else(|| IoError::Format { path: path.to_path_buf(), line: 1, message: "empty file".into() })?;
    Ok((header, lines.filter(|(_, l)| !l.is_empty()).map(|(i, l)| (i + 1, l.to_string())).collect()))
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, field: &str) -> Result<T, IoError> {
    field.parse().map_err(|_| IoError::Format {
        path: path.to_path_buf(),
        line,
        message: format!("cannot parse `{field}`"),
    })
}

pub fn read_state_csv(path: &Path) -> Result<Vec<ShellState>, IoError> {
    let (header, rows) = read_rows(path)?;
    let width = header.split(',').count();
    rows.into_iter()
        .map(|(line, row)| {
            let fields: Vec<&str> = row.split(',').collect();
            if fields.len() != width {
                return Err(IoError::Format {
                    path: path.to_path_buf(),
                    line,
                    message: format!("expected {width} fields, got {}", fields.len()),
                });
            }
            let t = parse_field(path, line, fields[0])?;
            let u = fields[1..].iter().map(|f| parse_field(path, line, f)).collect::<Result<_, _>>()?;
            Ok(ShellState::new(t, u))
        })
        .collect()
}

pub fn read_events_csv(path: &Path) -> Result<Vec<Event>, IoError> {
    let (_, rows) = read_rows(path)?;
    rows.into_iter()
        .map(|(line, row)| {
            let (j, t) = row.split_once(',').ok_or_else(|| IoError::Format {
                path: path.to_path_buf(),
                line,
                message: "expected `j,t_j`".into(),
            })?;
            Ok(Event { level: parse_field(path, line, j)?, t: parse_field(path, line, t)? })
        })
        .collect()
}

/// Provenance record written next to every run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub termination: serde_json::Value,
    pub wall_time_s: f64,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn write(&self, dir: &Path) -> Result<(), IoError> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text + "\n").map_err(io_err(&path))
    }

    pub fn read(dir: &Path) -> Result<Self, IoError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Pretty JSON file helper for reports.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 1.0, -2.5e-300, 1e300, f64::MIN_POSITIVE, 0.8558962403837294, -0.0] {
            let y: f64 = fmt_f64(x).parse().unwrap();
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn column_names() {
        assert_eq!(sobolev_column(1.5), "h1.5");
        assert_eq!(sobolev_column(2.0), "h2");
    }

    #[test]
    fn state_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(STATE_FILE);
        let samples = vec![ShellState::new(0.0, vec![1.0, 0.1, -1e-30]), ShellState::new(0.125, vec![0.3, 1.0 / 3.0, 7e200])];
        write_state_csv(&path, &samples).unwrap();
        assert_eq!(read_state_csv(&path).unwrap(), samples);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,u0,u1,u2\n"));
    }

    #[test]
    fn malformed_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(STATE_FILE);
        fs::write(&path, "t,u0\n0.0,1.0\n0.1\n").unwrap();
        match read_state_csv(&path).unwrap_err() {
            IoError::Format { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }
}
