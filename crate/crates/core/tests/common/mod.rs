//! Plain-loop reference arithmetic shared by the integration tests.
#![allow(dead_code)]

use ndarray::{ArrayD, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trajcast::data::{Neighbor, ObservationWindow, Point};
use trajcast::params::{Init, Linear, Mlp2, ParamId, ParamStore};
use trajcast::ModelConfig;

pub type Mat = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn with_init<T>(seed: u64, build: impl FnOnce(&mut ParamStore, &mut Init) -> T) -> (ParamStore, T) {
    let mut r = rng(seed);
    let mut init = Init { rng: &mut r };
    let mut store = ParamStore::new();
    let t = build(&mut store, &mut init);
    (store, t)
}

pub fn tensor(shape: &[usize], data: Vec<f64>) -> ArrayD<f64> {
    ArrayD::from_shape_vec(IxDyn(shape), data).unwrap()
}

pub fn uniform_data(r: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    use rand::Rng;
    (0..n).map(|_| r.random_range(-scale..scale)).collect()
}

pub fn mat(store: &ParamStore, id: ParamId) -> Mat {
    let v = store.value(id);
    let (r, c) = (v.shape()[0], v.shape()[1]);
    (0..r).map(|i| (0..c).map(|j| v[[i, j]]).collect()).collect()
}

pub fn flat(store: &ParamStore, id: ParamId) -> Vec<f64> {
    store.value(id).iter().copied().collect()
}

/// `x W + b` with `W` stored `[in][out]`.
pub fn affine(x: &[f64], w: &Mat, b: Option<&[f64]>) -> Vec<f64> {
    let out = w[0].len();
    (0..out)
        .map(|j| {
            let s: f64 = x.iter().zip(w).map(|(xi, row)| xi * row[j]).sum();
            s + b.map_or(0.0, |b| b[j])
        })
        .collect()
}

pub fn linear(store: &ParamStore, l: &Linear, x: &[f64]) -> Vec<f64> {
    let b = l.bias.map(|id| flat(store, id));
    affine(x, &mat(store, l.weight), b.as_deref())
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.max(0.0)).collect()
}

pub fn mlp2(store: &ParamStore, m: &Mlp2, x: &[f64]) -> Vec<f64> {
    linear(store, &m.second, &relu(&linear(store, &m.first, x)))
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn layer_norm(x: &[f64], gain: &[f64], shift: &[f64], eps: f64) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    x.iter()
        .enumerate()
        .map(|(i, v)| (v - mean) / (var + eps).sqrt() * gain[i] + shift[i])
        .collect()
}

pub fn prelu(x: &[f64], slope: f64) -> Vec<f64> {
    x.iter().map(|&v| if v > 0.0 { v } else { slope * v }).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn assert_close(got: &[f64], want: &[f64], tol: f64) {
    assert_eq!(got.len(), want.len(), "length mismatch");
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        assert!((g - w).abs() <= tol * (1.0 + w.abs()), "element {i}: got {g}, want {w}");
    }
}

/// F = S = S' = 8, H = 16, K = 2, two heads.
pub fn toy_config() -> ModelConfig {
    ModelConfig {
        temporal_dim: 8,
        social_dim: 8,
        social_out_dim: 8,
        latent_dim: 16,
        modes: 2,
        heads: 2,
        transformer_layers: 1,
        dropout: 0.0,
        ..ModelConfig::default()
    }
}

/// Small model used by the scaled training runs.
pub fn small_config() -> ModelConfig {
    ModelConfig {
        temporal_dim: 32,
        social_dim: 32,
        social_out_dim: 32,
        latent_dim: 64,
        dropout: 0.0,
        ..ModelConfig::default()
    }
}

/// Straight-line window with optional neighbors at the given lateral offsets.
pub fn line_window(agent_id: i64, velocity: Point, offsets: &[Point], obs: usize, pred: usize) -> ObservationWindow {
    let at = |t: i64, off: Point| [velocity[0] * t as f64 + off[0], velocity[1] * t as f64 + off[1]];
    let first = -(obs as i64 - 1);
    ObservationWindow {
        scene: "toy".into(),
        agent_id,
        anchor_frame: 0,
        origin: [0.0, 0.0],
        history: (first..=0).map(|t| at(t, [0.0, 0.0])).collect(),
        future: (1..=pred as i64).map(|t| at(t, [0.0, 0.0])).collect(),
        neighbors: offsets
            .iter()
            .enumerate()
            .map(|(i, &off)| Neighbor { agent_id: agent_id * 100 + i as i64 + 1, history: (first..=0).map(|t| at(t, off)).collect() })
            .collect(),
        velocity,
    }
}

/// Registers plain `pub fn` checks with the test harness; the acceptance
/// binary calls the same functions directly.
#[allow(unused_macros)]
macro_rules! harness {
    ($($name:ident),* $(,)?) => {
        mod harness {
            $(
                #[test]
                fn $name() {
                    super::$name()
                }
            )*
        }
    };
}
