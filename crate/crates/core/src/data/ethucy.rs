use std::collections::{BTreeMap, HashSet};

use super::{RawTrack, TrackPoint, Unit};
use crate::error::{Error, Result};

/// Parse an integral id that may be written as `780` or `780.0`.
pub(super) fn parse_integral(token: &str, what: &str, line: usize) -> Result<i64> {
    if let Ok(v) = token.parse::<i64>() {
        return Ok(v);
    }
    match token.parse::<f64>() {
        Ok(v) if v.is_finite() && v.fract() == 0.0 && v.abs() < 9.0e15 => Ok(v as i64),
        _ => Err(Error::Parse { line, message: format!("{what} `{token}` is not an integer") }),
    }
}

pub(super) fn parse_coord(token: &str, what: &str, line: usize) -> Result<f64> {
    match token.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse { line, message: format!("{what} `{token}` is not a finite number") }),
    }
}

/// Parse whitespace-separated `frame agent x y` rows (meters, 2.5 Hz).
///
/// Returns one track per agent id in ascending id order, frames sorted.
pub fn parse_ethucy(text: &str) -> Result<Vec<RawTrack>> {
    let mut by_agent: BTreeMap<i64, Vec<TrackPoint>> = BTreeMap::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let row = raw.trim();
        if row.is_empty() {
            continue;
        }
        let cols: Vec<&str> = row.split_whitespace().collect();
        if cols.len() != 4 {
            return Err(Error::Parse {
                line,
                message: format!("expected 4 columns `frame agent x y`, found {}", cols.len()),
            });
        }
        let frame = parse_integral(cols[0], "frame", line)?;
        let agent = parse_integral(cols[1], "agent id", line)?;
        let x = parse_coord(cols[2], "x", line)?;
        let y = parse_coord(cols[3], "y", line)?;
        if !seen.insert((frame, agent)) {
            return Err(Error::DuplicateEntry { line, frame, agent });
        }
        by_agent.entry(agent).or_default().push(TrackPoint { frame, x, y });
    }
    Ok(by_agent
        .into_iter()
        .map(|(agent_id, mut frames)| {
            frames.sort_by_key(|p| p.frame);
            RawTrack { agent_id, frames, label: None, unit: Unit::Meters }
        })
        .collect())
}
