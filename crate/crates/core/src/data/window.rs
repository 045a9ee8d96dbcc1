use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{norm, sub, Neighbor, ObservationWindow, Point, RawTrack, Scene};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowParams {
    pub obs_len: usize,
    pub pred_len: usize,
    /// Neighbor radius at `t = 0`, in the tracks' units.
    pub max_dist: f64,
    /// Anchor spacing in grid steps.
    pub anchor_stride: usize,
    /// Frame-id spacing of the sampling grid; inferred from the data when unset.
    pub frame_step: Option<i64>,
}

impl WindowParams {
    pub fn ethucy() -> Self {
        Self { obs_len: 8, pred_len: 12, max_dist: 10.0, anchor_stride: 1, frame_step: None }
    }

    pub fn sdd() -> Self {
        Self {
            obs_len: 8,
            pred_len: 12,
            max_dist: 200.0,
            anchor_stride: 1,
            frame_step: Some(super::SDD_FRAME_STRIDE),
        }
    }

    pub fn span(&self) -> usize {
        self.obs_len + self.pred_len
    }
}

impl Default for WindowParams {
    fn default() -> Self {
        Self::ethucy()
    }
}

/// Smallest positive gap between distinct frame ids across all tracks.
pub fn infer_frame_step(tracks: &[RawTrack]) -> Option<i64> {
    let mut frames: Vec<i64> = tracks.iter().flat_map(|t| t.frames.iter().map(|p| p.frame)).collect();
    frames.sort_unstable();
    frames.dedup();
    frames.windows(2).map(|w| w[1] - w[0]).filter(|&d| d > 0).min()
}

type Lookup = BTreeMap<i64, Point>;

fn lookup(track: &RawTrack) -> Lookup {
    track.frames.iter().map(|p| (p.frame, [p.x, p.y])).collect()
}

fn span_positions(lk: &Lookup, first: i64, step: i64, len: usize) -> Option<Vec<Point>> {
    (0..len as i64).map(|i| lk.get(&(first + i * step)).copied()).collect()
}

/// Cut sliding observation windows from tracks on a common grid.
///
/// Emits one window per (agent, anchor) with a complete `T' + T` span,
/// ordered by anchor frame then agent id. Neighbors are the other agents
/// with a complete observation span whose `t = 0` distance is within
/// `max_dist`, ordered by agent id.
pub fn build_windows(scene: &str, tracks: &[RawTrack], params: &WindowParams) -> Vec<ObservationWindow> {
    let Some(step) = params.frame_step.or_else(|| infer_frame_step(tracks)) else {
        return Vec::new();
    };
    if params.obs_len < 2 || params.pred_len == 0 {
        return Vec::new();
    }
    let lookups: Vec<(i64, Lookup)> = tracks.iter().map(|t| (t.agent_id, lookup(t))).collect();
    let grid_origin = lookups.iter().filter_map(|(_, lk)| lk.keys().next().copied()).min().unwrap_or(0);
    let stride = params.anchor_stride.max(1) as i64;
    let obs = params.obs_len as i64;

    let mut windows = Vec::new();
    for (agent_id, lk) in &lookups {
        for &anchor in lk.keys() {
            if (anchor - grid_origin).rem_euclid(step) != 0 || ((anchor - grid_origin) / step) % stride != 0 {
                continue;
            }
            let first = anchor - (obs - 1) * step;
            let Some(all) = span_positions(lk, first, step, params.span()) else {
                continue;
            };
            let origin = all[params.obs_len - 1];
            let history: Vec<Point> = all[..params.obs_len].iter().map(|p| sub(*p, origin)).collect();
            let future: Vec<Point> = all[params.obs_len..].iter().map(|p| sub(*p, origin)).collect();
            let velocity = sub(history[params.obs_len - 1], history[params.obs_len - 2]);
            let neighbors = lookups
                .iter()
                .filter(|(other, _)| other != agent_id)
                .filter_map(|(other, olk)| {
                    let hist = span_positions(olk, first, step, params.obs_len)?;
                    let here = hist[params.obs_len - 1];
                    (norm(sub(here, origin)) <= params.max_dist).then(|| Neighbor {
                        agent_id: *other,
                        history: hist.iter().map(|p| sub(*p, origin)).collect(),
                    })
                })
                .collect();
            windows.push(ObservationWindow {
                scene: scene.to_string(),
                agent_id: *agent_id,
                anchor_frame: anchor,
                origin,
                history,
                future,
                neighbors,
                velocity,
            });
        }
    }
    windows.sort_by_key(|w| (w.anchor_frame, w.agent_id));
    windows
}

/// Restrict every track to the `T' + T` frames around `anchor_frame`.
pub fn cut_scene(dataset_name: &str, tracks: &[RawTrack], anchor_frame: i64, params: &WindowParams) -> Scene {
    let step = params.frame_step.or_else(|| infer_frame_step(tracks)).unwrap_or(1);
    let first = anchor_frame - (params.obs_len as i64 - 1) * step;
    let last = anchor_frame + params.pred_len as i64 * step;
    let agent_tracks = tracks
        .iter()
        .filter_map(|t| {
            let frames: Vec<_> = t
                .frames
                .iter()
                .filter(|p| p.frame >= first && p.frame <= last && (p.frame - first).rem_euclid(step) == 0)
                .copied()
                .collect();
            (!frames.is_empty()).then(|| RawTrack { frames, ..t.clone() })
        })
        .collect();
    Scene { dataset_name: dataset_name.to_string(), agent_tracks, anchor_frame }
}

fn rotate(p: Point, c: f64, s: f64) -> Point {
    [c * p[0] - s * p[1], s * p[0] + c * p[1]]
}

/// Rotate every coordinate of a window about its origin by `angle` radians.
pub fn augment_rotation(window: &ObservationWindow, angle: f64) -> ObservationWindow {
    let (s, c) = angle.sin_cos();
    let rot = |pts: &[Point]| pts.iter().map(|p| rotate(*p, c, s)).collect::<Vec<_>>();
    ObservationWindow {
        history: rot(&window.history),
        future: rot(&window.future),
        neighbors: window
            .neighbors
            .iter()
            .map(|n| Neighbor { agent_id: n.agent_id, history: rot(&n.history) })
            .collect(),
        velocity: rotate(window.velocity, c, s),
        ..window.clone()
    }
}
