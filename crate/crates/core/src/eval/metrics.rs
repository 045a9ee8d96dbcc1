use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{ObservationWindow, Point};
use crate::error::{Error, Result};
use crate::model::Predictor;

/// Best-of-K displacement errors for one window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdeFde {
    pub ade: f64,
    pub fde: f64,
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Euclidean best-of-K ADE and FDE.
///
/// By default the two minima are taken independently; with `joint_min` the
/// FDE is reported for the modality that minimizes ADE.
pub fn ade_fde(pred: &[Vec<Point>], gt: &[Point], joint_min: bool) -> Result<AdeFde> {
    let finite = |pts: &[Point]| pts.iter().all(|p| p[0].is_finite() && p[1].is_finite());
    if !finite(gt) || !pred.iter().all(|tr| finite(tr)) {
        return Err(Error::NonFinite("ADE/FDE input".into()));
    }
    if gt.is_empty() || pred.is_empty() || pred.iter().any(|tr| tr.len() != gt.len()) {
        return Err(Error::Shape(format!("need K >= 1 trajectories of {} steps", gt.len())));
    }
    let t = gt.len();
    let per_mode: Vec<(f64, f64)> = pred
        .iter()
        .map(|tr| {
            let ade = tr.iter().zip(gt).map(|(p, q)| dist(*p, *q)).sum::<f64>() / t as f64;
            (ade, dist(tr[t - 1], gt[t - 1]))
        })
        .collect();
    if joint_min {
        let mut best = 0;
        for (k, m) in per_mode.iter().enumerate() {
            if m.0 < per_mode[best].0 {
                best = k;
            }
        }
        let (ade, fde) = per_mode[best];
        return Ok(AdeFde { ade, fde });
    }
    Ok(AdeFde {
        ade: per_mode.iter().map(|m| m.0).fold(f64::INFINITY, f64::min),
        fde: per_mode.iter().map(|m| m.1).fold(f64::INFINITY, f64::min),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneMetrics {
    pub scene: String,
    pub count: usize,
    pub ade: f64,
    pub fde: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenes: Vec<SceneMetrics>,
    /// Unweighted mean of the scene means.
    pub average_ade: f64,
    pub average_fde: f64,
    pub modes: usize,
    pub total_windows: usize,
    pub joint_min: bool,
    pub param_count: Option<usize>,
    pub flop_estimate: Option<u64>,
}

/// Sum in sorted order so the result does not depend on window order.
fn stable_mean(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

impl MetricsReport {
    /// Aggregate per-window errors grouped by scene.
    pub fn from_errors(per_scene: &BTreeMap<String, Vec<AdeFde>>, modes: usize, joint_min: bool) -> Result<Self> {
        let scenes: Vec<SceneMetrics> = per_scene
            .iter()
            .filter(|(_, v)| !v.is_empty())
            .map(|(scene, v)| SceneMetrics {
                scene: scene.clone(),
                count: v.len(),
                ade: stable_mean(&mut v.iter().map(|e| e.ade).collect::<Vec<_>>()),
                fde: stable_mean(&mut v.iter().map(|e| e.fde).collect::<Vec<_>>()),
            })
            .collect();
        if scenes.is_empty() {
            return Err(Error::Empty("test set has no windows".into()));
        }
        let n = scenes.len() as f64;
        Ok(Self {
            average_ade: scenes.iter().map(|s| s.ade).sum::<f64>() / n,
            average_fde: scenes.iter().map(|s| s.fde).sum::<f64>() / n,
            total_windows: scenes.iter().map(|s| s.count).sum(),
            scenes,
            modes,
            joint_min,
            param_count: None,
            flop_estimate: None,
        })
    }

    pub fn scene(&self, name: &str) -> Option<&SceneMetrics> {
        self.scenes.iter().find(|s| s.scene == name)
    }

    /// Scenes as columns, `ADE/FDE` cells, with a trailing average column.
    pub fn table(&self) -> String {
        let mut header = vec![String::from("Metric")];
        let mut row = vec![format!("ADE/FDE@{}", self.modes)];
        let mut count = vec![String::from("windows")];
        for s in &self.scenes {
            header.push(s.scene.clone());
            row.push(format!("{:.2}/{:.2}", s.ade, s.fde));
            count.push(s.count.to_string());
        }
        header.push("Average".into());
        row.push(format!("{:.2}/{:.2}", self.average_ade, self.average_fde));
        count.push(self.total_windows.to_string());
        let widths: Vec<usize> = (0..header.len())
            .map(|i| header[i].len().max(row[i].len()).max(count[i].len()))
            .collect();
        let mut out = String::new();
        for line in [&header, &row, &count] {
            let cells: Vec<String> = line.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
            writeln!(out, "{}", cells.join("  ")).unwrap();
        }
        if let Some(p) = self.param_count {
            writeln!(out, "params: {p}").unwrap();
        }
        if let Some(f) = self.flop_estimate {
            writeln!(out, "flops per single-agent forward: {f}").unwrap();
        }
        out
    }
}

/// Per-window best-of-K errors in world coordinates, grouped by scene.
pub fn window_errors<P>(
    predictor: &P,
    windows: &[&ObservationWindow],
    joint_min: bool,
) -> Result<(BTreeMap<String, Vec<AdeFde>>, usize)>
where
    P: Predictor + ?Sized,
{
    let predictions = predictor.predict(windows)?;
    let mut per_scene: BTreeMap<String, Vec<AdeFde>> = BTreeMap::new();
    let mut modes = 0;
    for (w, p) in windows.iter().zip(&predictions) {
        modes = modes.max(p.modes());
        let e = ade_fde(&p.to_world(w.origin), &w.world_future(), joint_min)?;
        per_scene.entry(w.scene.clone()).or_default().push(e);
    }
    Ok((per_scene, modes))
}

/// Run `predictor` over every window and aggregate per scene.
pub fn evaluate<'a, P, I>(predictor: &P, windows: I, joint_min: bool) -> Result<MetricsReport>
where
    P: Predictor + ?Sized,
    I: IntoIterator<Item = &'a ObservationWindow>,
{
    let windows: Vec<&ObservationWindow> = windows.into_iter().collect();
    if windows.is_empty() {
        return Err(Error::Empty("test set has no windows".into()));
    }
    let (per_scene, modes) = window_errors(predictor, &windows, joint_min)?;
    MetricsReport::from_errors(&per_scene, modes, joint_min)
}
