//! Trajectory CSV files.
//!
//! Header `step,x,y,mode,outcome`. The outcome column (`escaped` or
//! `timed_out`) is filled on the last row only; `mode` is `unknown` for
//! traces without behavioural labels.

use std::fs;
use std::path::Path;

use crate::behavior::Mode;
use crate::engine::{Sample, TrialOutcome, Trajectory};
use crate::error::{Error, Result};
use crate::floorplan::Pos;

pub const HEADER: [&str; 5] = ["step", "x", "y", "mode", "outcome"];

pub fn write_csv(traj: &Trajectory) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Argument(format!("csv: {e}"));
    w.write_record(HEADER).map_err(csv_err)?;
    let last = traj.samples.len().saturating_sub(1);
    for (i, s) in traj.samples.iter().enumerate() {
        let outcome = if i == last {
            match traj.outcome {
                TrialOutcome::Escaped { .. } => "escaped",
                TrialOutcome::TimedOut => "timed_out",
            }
        } else {
            ""
        };
        let mode = s.mode.map(Mode::as_str).unwrap_or("unknown");
        w.write_record([
            s.step.to_string().as_str(),
            &s.pos.x.to_string(),
            &s.pos.y.to_string(),
            mode,
            outcome,
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Argument(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("ascii output"))
}

/// Parses trajectory CSV. Errors name the offending line (header is 1).
pub fn parse_csv(text: &str) -> Result<Trajectory> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = r
        .headers()
        .map_err(|e| Error::format(1, e.to_string()))?
        .clone();
    if header.iter().map(str::trim).ne(HEADER) {
        return Err(Error::format(1, format!("expected header {}", HEADER.join(","))));
    }
    let mut samples: Vec<Sample> = Vec::new();
    let mut outcome = None;
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::format(line, e.to_string()))?;
        if outcome.is_some() {
            return Err(Error::format(line, "rows after the outcome row"));
        }
        let field = |k: usize| rec.get(k).map(str::trim).unwrap_or("");
        let step: u32 = parse_num(field(0), "step", line)?;
        let x: usize = parse_num(field(1), "x", line)?;
        let y: usize = parse_num(field(2), "y", line)?;
        let mode = match field(3) {
            "unknown" | "" => None,
            m => Some(m.parse::<Mode>().map_err(|e| Error::format(line, e.to_string()))?),
        };
        if let Some(prev) = samples.last() {
            if step <= prev.step {
                return Err(Error::format(line, "steps must be strictly increasing"));
            }
        }
        outcome = match field(4) {
            "" => None,
            "escaped" => Some(TrialOutcome::Escaped { at: step }),
            "timed_out" => Some(TrialOutcome::TimedOut),
            o => return Err(Error::format(line, format!("unknown outcome {o:?}"))),
        };
        samples.push(Sample {
            step,
            pos: Pos::new(x, y),
            mode,
        });
    }
    if samples.is_empty() {
        return Err(Error::format(2, "trace has no samples"));
    }
    Ok(Trajectory {
        samples,
        outcome: outcome.unwrap_or(TrialOutcome::TimedOut),
    })
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str, line: usize) -> Result<T> {
    s.parse()
        .map_err(|_| Error::format(line, format!("invalid {what} {s:?}")))
}

pub fn read_csv(path: &Path) -> Result<Trajectory> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text)
}
