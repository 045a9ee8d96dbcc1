//! JSON-lines prediction interchange.
//!
//! One record per line, all coordinates in the scene's world frame
//! (metres for ETH/UCY, pixels for SDD):
//!
//! | field          | type                 | meaning                                         |
//! |----------------|----------------------|-------------------------------------------------|
//! | `version`      | integer              | schema version, currently `1`                   |
//! | `scene`        | string               | scene name                                      |
//! | `agent_id`     | integer              | primary agent                                   |
//! | `anchor_frame` | integer              | frame of the last observed step                 |
//! | `origin`       | `[x, y]`             | primary position at the anchor frame            |
//! | `history`      | `[[x, y]; T']`       | observed positions                              |
//! | `future`       | `[[x, y]; T]`        | ground truth; empty when unknown                |
//! | `neighbors`    | `[{agent_id, history}]` | neighbor histories used by the social encoder |
//! | `trajectories` | `[[[x, y]; T]; K]`   | predicted futures                               |
//! | `scores`       | `[p; K]`             | modality probabilities                          |

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{ObservationWindow, Point};
use crate::error::{Error, Result};
use crate::eval::{ade_fde, AdeFde, MetricsReport};
use crate::model::ModalityPrediction;

pub const PREDICTION_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborRecord {
    pub agent_id: i64,
    pub history: Vec<Point>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub version: u32,
    pub scene: String,
    pub agent_id: i64,
    pub anchor_frame: i64,
    pub origin: Point,
    pub history: Vec<Point>,
    pub future: Vec<Point>,
    #[serde(default)]
    pub neighbors: Vec<NeighborRecord>,
    pub trajectories: Vec<Vec<Point>>,
    pub scores: Vec<f64>,
}

fn shift(points: &[Point], origin: Point) -> Vec<Point> {
    points.iter().map(|p| [p[0] + origin[0], p[1] + origin[1]]).collect()
}

impl PredictionRecord {
    pub fn new(window: &ObservationWindow, prediction: &ModalityPrediction) -> Self {
        Self {
            version: PREDICTION_VERSION,
            scene: window.scene.clone(),
            agent_id: window.agent_id,
            anchor_frame: window.anchor_frame,
            origin: window.origin,
            history: window.world_history(),
            future: window.world_future(),
            neighbors: window
                .neighbors
                .iter()
                .map(|n| NeighborRecord { agent_id: n.agent_id, history: shift(&n.history, window.origin) })
                .collect(),
            trajectories: prediction.to_world(window.origin),
            scores: prediction.scores.clone(),
        }
    }

    pub fn errors(&self, joint_min: bool) -> Result<AdeFde> {
        ade_fde(&self.trajectories, &self.future, joint_min)
    }
}

pub fn write_predictions(mut out: impl Write, records: &[PredictionRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Format { path: path.to_path_buf(), message: format!("line {}: {message}", i + 1) };
        let record: PredictionRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        if record.version != PREDICTION_VERSION {
            return Err(bad(format!("unsupported record version {}", record.version)));
        }
        if record.scores.len() != record.trajectories.len() {
            return Err(bad(format!("{} scores for {} trajectories", record.scores.len(), record.trajectories.len())));
        }
        out.push(record);
    }
    Ok(out)
}

/// Metrics recomputed from interchange records.
pub fn evaluate_records(records: &[PredictionRecord], joint_min: bool) -> Result<MetricsReport> {
    let mut per_scene: BTreeMap<String, Vec<AdeFde>> = BTreeMap::new();
    let mut modes = 0;
    for r in records {
        modes = modes.max(r.trajectories.len());
        per_scene.entry(r.scene.clone()).or_default().push(r.errors(joint_min)?);
    }
    MetricsReport::from_errors(&per_scene, modes, joint_min)
}
