//! Dataset ingestion: raw annotation parsing, sliding observation windows,
//! rotation augmentation, leave-one-out splits and the on-disk window cache.

mod cache;
mod ethucy;
mod loader;
mod sdd;
mod split;
pub mod synthetic;
mod window;

use serde::{Deserialize, Serialize};

pub use cache::{read_cache, write_cache, CacheHeader, CACHE_FORMAT, CACHE_VERSION};
pub use ethucy::parse_ethucy;
pub use loader::{load_ethucy, load_sdd, DatasetKind, SceneWindows};
pub use sdd::{parse_sdd, SDD_FRAME_STRIDE};
pub use split::{
    leave_one_out_split, sdd_split, validation_split, EthUcyScene, SDD_TEST_SCENES,
};
pub use window::{augment_rotation, build_windows, cut_scene, infer_frame_step, WindowParams};

pub type Point = [f64; 2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Meters,
    Pixels,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub frame: i64,
    pub x: f64,
    pub y: f64,
}

/// One agent's annotated positions, frames strictly increasing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawTrack {
    pub agent_id: i64,
    pub frames: Vec<TrackPoint>,
    pub label: Option<String>,
    pub unit: Unit,
}

impl RawTrack {
    pub fn position_at(&self, frame: i64) -> Option<Point> {
        self.frames
            .binary_search_by_key(&frame, |p| p.frame)
            .ok()
            .map(|i| [self.frames[i].x, self.frames[i].y])
    }
}

/// Every agent's track restricted to one `T' + T` timestamp window.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub dataset_name: String,
    pub agent_tracks: Vec<RawTrack>,
    pub anchor_frame: i64,
}

/// A neighbor's observed history in the primary agent's normalized frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub agent_id: i64,
    pub history: Vec<Point>,
}

/// One primary agent's observation/prediction sample.
///
/// All coordinates are translated so the primary's position at `t = 0`
/// (the last history step) is the origin; `origin` holds that position in
/// the scene frame for de-normalization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationWindow {
    pub scene: String,
    pub agent_id: i64,
    pub anchor_frame: i64,
    pub origin: Point,
    pub history: Vec<Point>,
    pub future: Vec<Point>,
    pub neighbors: Vec<Neighbor>,
    pub velocity: Point,
}

impl ObservationWindow {
    pub fn obs_len(&self) -> usize {
        self.history.len()
    }

    pub fn pred_len(&self) -> usize {
        self.future.len()
    }

    /// Future positions in the scene frame.
    pub fn world_future(&self) -> Vec<Point> {
        self.future.iter().map(|p| add(*p, self.origin)).collect()
    }

    pub fn world_history(&self) -> Vec<Point> {
        self.history.iter().map(|p| add(*p, self.origin)).collect()
    }
}

pub(crate) fn add(a: Point, b: Point) -> Point {
    [a[0] + b[0], a[1] + b[1]]
}

pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

pub(crate) fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}
