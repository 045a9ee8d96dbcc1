use std::collections::BTreeMap;

use super::ethucy::parse_coord;
use super::{RawTrack, TrackPoint, Unit};
use crate::error::{Error, Result};

/// 30 Hz annotations resampled to a 0.4 s grid.
pub const SDD_FRAME_STRIDE: i64 = 12;

/// Parse an SDD `annotations.txt`:
/// `track_id xmin ymin xmax ymax frame lost occluded generated label`.
///
/// Positions are bounding-box centers in pixels. Rows flagged `lost` are
/// dropped and only frames on the 12-frame grid are kept.
pub fn parse_sdd(text: &str) -> Result<Vec<RawTrack>> {
    let mut by_agent: BTreeMap<i64, (Vec<TrackPoint>, Option<String>)> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let row = raw.trim();
        if row.is_empty() {
            continue;
        }
        let cols: Vec<&str> = row.split_whitespace().collect();
        if cols.len() < 9 {
            return Err(Error::Parse {
                line,
                message: format!("expected 10 columns, found {}", cols.len()),
            });
        }
        let int = |idx: usize, what: &str| {
            cols[idx].parse::<i64>().map_err(|_| Error::Parse {
                line,
                message: format!("{what} `{}` is not an integer", cols[idx]),
            })
        };
        let track = int(0, "track id")?;
        let frame = int(5, "frame")?;
        let lost = int(6, "lost flag")?;
        let xmin = parse_coord(cols[1], "xmin", line)?;
        let ymin = parse_coord(cols[2], "ymin", line)?;
        let xmax = parse_coord(cols[3], "xmax", line)?;
        let ymax = parse_coord(cols[4], "ymax", line)?;
        if xmax < xmin || ymax < ymin {
            return Err(Error::Parse { line, message: "inverted bounding box".into() });
        }
        let label = (cols.len() > 9).then(|| cols[9..].join(" ").trim_matches('"').to_string());
        if lost == 1 || frame.rem_euclid(SDD_FRAME_STRIDE) != 0 {
            continue;
        }
        let entry = by_agent.entry(track).or_insert_with(|| (Vec::new(), None));
        if entry.0.iter().any(|p| p.frame == frame) {
            return Err(Error::DuplicateEntry { line, frame, agent: track });
        }
        entry.0.push(TrackPoint { frame, x: (xmin + xmax) / 2.0, y: (ymin + ymax) / 2.0 });
        if entry.1.is_none() {
            entry.1 = label;
        }
    }
    Ok(by_agent
        .into_iter()
        .map(|(agent_id, (mut frames, label))| {
            frames.sort_by_key(|p| p.frame);
            RawTrack { agent_id, frames, label, unit: Unit::Pixels }
        })
        .collect())
}
