//! Static SVG rendering of interchange records.
//!
//! Polyline and marker coordinates are written in world units inside a
//! y-flipped group, so the numbers in the file are the de-normalized
//! prediction values themselves. One marker per time step.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::data::Point;
use crate::error::{Error, Result};
use crate::interchange::PredictionRecord;

const HISTORY_COLOR: &str = "#1f4e99";
const TRUTH_COLOR: &str = "#2e9e44";
const PREDICTION_COLOR: &str = "#e0b000";
const NEIGHBOR_COLOR: &str = "#8c8c8c";

fn points_attr(points: &[Point]) -> String {
    points.iter().map(|p| format!("{},{}", p[0], p[1])).collect::<Vec<_>>().join(" ")
}

fn bounds(record: &PredictionRecord) -> (Point, Point) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    let all = record
        .history
        .iter()
        .chain(&record.future)
        .chain(record.trajectories.iter().flatten())
        .chain(record.neighbors.iter().flat_map(|n| n.history.iter()));
    for p in all {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    if !lo[0].is_finite() {
        return ([-1.0, -1.0], [1.0, 1.0]);
    }
    let pad = ((hi[0] - lo[0]).max(hi[1] - lo[1]) * 0.05).max(1e-3);
    ([lo[0] - pad, lo[1] - pad], [hi[0] + pad, hi[1] + pad])
}

fn track(out: &mut String, class: &str, color: &str, opacity: f64, points: &[Point], radius: f64) {
    if points.is_empty() {
        return;
    }
    writeln!(
        out,
        r#"  <g class="{class}" stroke="{color}" fill="{color}" opacity="{opacity:.3}">"#
    )
    .unwrap();
    writeln!(
        out,
        r#"    <polyline fill="none" stroke-width="2" vector-effect="non-scaling-stroke" points="{}"/>"#,
        points_attr(points)
    )
    .unwrap();
    for p in points {
        writeln!(out, r#"    <circle cx="{}" cy="{}" r="{radius}"/>"#, p[0], p[1]).unwrap();
    }
    writeln!(out, "  </g>").unwrap();
}

/// One SVG document for one record.
pub fn render_svg(record: &PredictionRecord) -> String {
    let (lo, hi) = bounds(record);
    let (w, h) = (hi[0] - lo[0], hi[1] - lo[1]);
    let radius = w.max(h) / 150.0;
    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="640" height="{:.0}" viewBox="{} {} {} {}">"#,
        640.0 * h / w,
        lo[0],
        -hi[1],
        w,
        h
    )
    .unwrap();
    writeln!(
        out,
        "<title>scene {} agent {} frame {}</title>",
        record.scene, record.agent_id, record.anchor_frame
    )
    .unwrap();
    writeln!(out, r#"<g transform="scale(1,-1)">"#).unwrap();
    for n in &record.neighbors {
        track(&mut out, "neighbor", NEIGHBOR_COLOR, 0.6, &n.history, radius * 0.7);
    }
    let top = record.scores.iter().cloned().fold(0.0, f64::max);
    for (k, tr) in record.trajectories.iter().enumerate() {
        let score = record.scores.get(k).copied().unwrap_or(0.0);
        let opacity = if top > 0.0 { 0.15 + 0.85 * score / top } else { 1.0 };
        let mut path = Vec::with_capacity(tr.len() + 1);
        path.push(record.origin);
        path.extend_from_slice(tr);
        track(&mut out, &format!("prediction k{k}"), PREDICTION_COLOR, opacity, &path, radius);
    }
    let mut truth = Vec::with_capacity(record.future.len() + 1);
    if !record.future.is_empty() {
        truth.push(record.origin);
        truth.extend_from_slice(&record.future);
    }
    track(&mut out, "truth", TRUTH_COLOR, 1.0, &truth, radius);
    track(&mut out, "history", HISTORY_COLOR, 1.0, &record.history, radius);
    writeln!(out, "</g>\n</svg>").unwrap();
    out
}

/// Which records to draw.
#[derive(Clone, Debug, Default)]
pub struct PlotSelection {
    pub scene: Option<String>,
    pub agent: Option<i64>,
    pub limit: Option<usize>,
}

pub fn file_name(record: &PredictionRecord) -> String {
    format!("{}_agent{}_frame{}.svg", record.scene, record.agent_id, record.anchor_frame)
}

/// Write one SVG per selected record into `dir`; returns the written paths.
pub fn plot_records(records: &[PredictionRecord], selection: &PlotSelection, dir: &Path) -> Result<Vec<PathBuf>> {
    let in_scene: Vec<&PredictionRecord> = records
        .iter()
        .filter(|r| selection.scene.as_ref().is_none_or(|s| &r.scene == s))
        .collect();
    let chosen: Vec<&PredictionRecord> = match selection.agent {
        Some(agent) => {
            let hits: Vec<&PredictionRecord> = in_scene.iter().copied().filter(|r| r.agent_id == agent).collect();
            if hits.is_empty() && !records.is_empty() {
                let mut ids: Vec<i64> = in_scene.iter().map(|r| r.agent_id).collect();
                ids.sort_unstable();
                ids.dedup();
                let available = ids.iter().map(i64::to_string).collect::<Vec<_>>().join(", ");
                return Err(Error::UnknownAgent { agent, available });
            }
            hits
        }
        None => in_scene,
    };
    let take = selection.limit.unwrap_or(usize::MAX);
    if !chosen.is_empty() {
        std::fs::create_dir_all(dir)?;
    }
    let mut written = Vec::new();
    for r in chosen.into_iter().take(take) {
        let path = dir.join(file_name(r));
        std::fs::write(&path, render_svg(r))?;
        written.push(path);
    }
    Ok(written)
}
