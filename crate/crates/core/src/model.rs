use ndarray::{ArrayD, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Graph, Tensor};
use crate::config::ModelConfig;
use crate::data::{ObservationWindow, Point};
use crate::error::{Error, Result};
use crate::modality::{HeadOutput, ModalityHead};
use crate::params::{Init, ParamStore};
use crate::social::{SocialEncoder, SocialGraph, SocialOutput};
use crate::temporal::{history_tensor, TemporalEncoder, TemporalFeatures};

/// Tensors for one forward pass over a set of windows.
#[derive(Clone, Debug)]
pub struct Batch {
    pub size: usize,
    /// `[B, T', 2]` normalized primary histories.
    pub history: Tensor,
    /// `[B, T, 2]` normalized ground truth.
    pub future: Tensor,
    pub graph: SocialGraph,
}

impl Batch {
    pub fn from_windows(windows: &[&ObservationWindow]) -> Result<Self> {
        if windows.is_empty() {
            return Err(Error::Empty("batch has no windows".into()));
        }
        let t_obs = windows[0].obs_len();
        let t_pred = windows[0].pred_len();
        for w in windows {
            if w.obs_len() != t_obs || w.pred_len() != t_pred || w.neighbors.iter().any(|n| n.history.len() != t_obs) {
                return Err(Error::Shape(format!(
                    "window ({}, agent {}, frame {}) does not match {t_obs}/{t_pred} steps",
                    w.scene, w.agent_id, w.anchor_frame
                )));
            }
            let finite = |pts: &[Point]| pts.iter().all(|p| p[0].is_finite() && p[1].is_finite());
            if !finite(&w.history) || !finite(&w.future) || !w.neighbors.iter().all(|n| finite(&n.history)) {
                return Err(Error::NonFinite(format!("window ({}, agent {})", w.scene, w.agent_id)));
            }
        }
        let hist: Vec<&[Point]> = windows.iter().map(|w| w.history.as_slice()).collect();
        let fut: Vec<&[Point]> = windows.iter().map(|w| w.future.as_slice()).collect();
        Ok(Self {
            size: windows.len(),
            history: history_tensor(&hist),
            future: history_tensor(&fut),
            graph: SocialGraph::from_windows(windows),
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ForwardOutput {
    pub temporal: TemporalFeatures,
    pub social: SocialOutput,
    pub head: HeadOutput,
}

/// The full forecaster: temporal encoder, social encoder and modality head
/// over one parameter store.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub temporal: TemporalEncoder,
    pub social: SocialEncoder,
    pub head: ModalityHead,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = Init { rng: &mut rng };
        let mut params = ParamStore::new();
        let temporal = TemporalEncoder::new(&mut params, &mut init, &config);
        let social = SocialEncoder::new(&mut params, &mut init, &config);
        let head = ModalityHead::new(&mut params, &mut init, &config);
        Ok(Self { config, params, temporal, social, head })
    }

    pub fn forward(&self, g: &mut Graph, batch: &Batch) -> Result<ForwardOutput> {
        let b = batch.size;
        let history = g.constant(batch.history.clone());
        let temporal = self.temporal.forward(g, history)?;
        let social = self.social.forward(g, &batch.graph);
        let width = self.config.tokens() * self.config.temporal_dim;
        let flat = g.reshape(temporal.tokens, &[b, width]);
        // primaries occupy the first B graph nodes
        let own = g.narrow(social.features, 0, 0, b);
        let head = self.head.forward(g, flat, own);
        Ok(ForwardOutput { temporal, social, head })
    }

    /// Inference on a batch; no tape is kept.
    pub fn predict(&self, windows: &[&ObservationWindow]) -> Result<Vec<ModalityPrediction>> {
        let batch = Batch::from_windows(windows)?;
        let mut g = Graph::new(&self.params);
        let out = self.forward(&mut g, &batch)?;
        Ok(ModalityPrediction::unpack(g.value(out.head.trajectories), g.value(out.head.probabilities)))
    }

    pub fn num_params(&self) -> usize {
        self.params.num_scalars()
    }
}

/// `K` candidate futures for one agent in its normalized frame.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalityPrediction {
    pub trajectories: Vec<Vec<Point>>,
    pub scores: Vec<f64>,
}

impl ModalityPrediction {
    /// Split `[B, K, T, 2]` trajectories and `[B, K]` scores per agent.
    pub fn unpack(traj: &ArrayD<f64>, scores: &ArrayD<f64>) -> Vec<Self> {
        let (b, k, t) = (traj.shape()[0], traj.shape()[1], traj.shape()[2]);
        (0..b)
            .map(|bi| Self {
                trajectories: (0..k)
                    .map(|ki| (0..t).map(|ti| [traj[[bi, ki, ti, 0]], traj[[bi, ki, ti, 1]]]).collect())
                    .collect(),
                scores: (0..k).map(|ki| scores[[bi, ki]]).collect(),
            })
            .collect()
    }

    pub fn modes(&self) -> usize {
        self.trajectories.len()
    }

    /// Shift every trajectory by `origin`.
    pub fn to_world(&self, origin: Point) -> Vec<Vec<Point>> {
        self.trajectories
            .iter()
            .map(|tr| tr.iter().map(|p| [p[0] + origin[0], p[1] + origin[1]]).collect())
            .collect()
    }

    /// `[K, T, 2]` tensor view for the loss helpers.
    pub fn to_tensor(&self) -> Tensor {
        let k = self.trajectories.len();
        let t = self.trajectories.first().map_or(0, Vec::len);
        let data = self.trajectories.iter().flat_map(|tr| tr.iter().flat_map(|p| *p)).collect();
        ArrayD::from_shape_vec(IxDyn(&[k, t, 2]), data).unwrap()
    }
}

/// Anything that can emit `K` futures per window.
pub trait Predictor {
    fn predict(&self, windows: &[&ObservationWindow]) -> Result<Vec<ModalityPrediction>>;
}

impl Predictor for Model {
    fn predict(&self, windows: &[&ObservationWindow]) -> Result<Vec<ModalityPrediction>> {
        let mut out = Vec::with_capacity(windows.len());
        for chunk in windows.chunks(256) {
            out.extend(Model::predict(self, chunk)?);
        }
        Ok(out)
    }
}

/// Keeps the last observed velocity for every future step.
pub struct ConstantVelocity;

impl Predictor for ConstantVelocity {
    fn predict(&self, windows: &[&ObservationWindow]) -> Result<Vec<ModalityPrediction>> {
        Ok(windows
            .iter()
            .map(|w| ModalityPrediction {
                trajectories: vec![(1..=w.pred_len())
                    .map(|t| [w.velocity[0] * t as f64, w.velocity[1] * t as f64])
                    .collect()],
                scores: vec![1.0],
            })
            .collect())
    }
}

/// Predicts the agent stays at its `t = 0` position.
pub struct Stationary;

impl Predictor for Stationary {
    fn predict(&self, windows: &[&ObservationWindow]) -> Result<Vec<ModalityPrediction>> {
        Ok(windows
            .iter()
            .map(|w| ModalityPrediction { trajectories: vec![vec![[0.0, 0.0]; w.pred_len()]], scores: vec![1.0] })
            .collect())
    }
}
