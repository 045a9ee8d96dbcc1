//! Patch-based temporal encoder.
//!
//! Each coordinate channel of a `T'`-step history is cut into overlapping
//! length-`P` windows, embedded by its own two-layer perceptron, and the two
//! channels are blended by a sigmoid gate. The resulting `T' - P + 1`
//! tokens pass through a post-norm Transformer encoder with sinusoidal
//! positions and then a single-layer GRU whose per-step outputs form the
//! temporal features.

use ndarray::{Array2, IxDyn};

use crate::autograd::{Graph, Tensor, Var};
use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::params::{zeros, GatedFusion, Init, LayerNorm, Linear, Mlp2, ParamStore};

/// Fixed sinusoidal positional table `[tokens, dim]`.
pub fn sinusoidal_positions(tokens: usize, dim: usize) -> Tensor {
    let mut pe = Array2::<f64>::zeros((tokens, dim));
    for pos in 0..tokens {
        for i in 0..dim {
            let pair = (i / 2) as f64 * 2.0;
            let angle = pos as f64 / 10000f64.powf(pair / dim as f64);
            pe[[pos, i]] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    pe.into_dyn()
}

/// Multi-head scaled dot-product self-attention with output projection.
#[derive(Clone, Debug)]
pub struct SelfAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
}

impl SelfAttention {
    pub fn new(store: &mut ParamStore, init: &mut Init, name: &str, dim: usize, heads: usize) -> Self {
        Self {
            query: Linear::new(store, init, &format!("{name}.q"), dim, dim),
            key: Linear::new(store, init, &format!("{name}.k"), dim, dim),
            value: Linear::new(store, init, &format!("{name}.v"), dim, dim),
            output: Linear::new(store, init, &format!("{name}.o"), dim, dim),
            heads,
        }
    }

    /// `x: [B, n, D] -> [B, n, D]`.
    pub fn forward(&self, g: &mut Graph, x: Var, dropout: f64) -> Var {
        let (b, n, dim) = {
            let s = g.shape(x);
            (s[0], s[1], s[2])
        };
        let h = self.heads;
        let d = dim / h;
        let split = |g: &mut Graph, t: Var| {
            let t = g.reshape(t, &[b, n, h, d]);
            let t = g.permute(t, &[0, 2, 1, 3]);
            g.reshape(t, &[b * h, n, d])
        };
        let q = self.query.forward(g, x);
        let k = self.key.forward(g, x);
        let v = self.value.forward(g, x);
        let (q, k, v) = (split(g, q), split(g, k), split(g, v));
        let scores = g.bmm(q, k, true);
        let scores = g.scale(scores, 1.0 / (d as f64).sqrt());
        let attn = g.softmax(scores);
        let attn = g.dropout(attn, dropout);
        let ctx = g.bmm(attn, v, false);
        let ctx = g.reshape(ctx, &[b, h, n, d]);
        let ctx = g.permute(ctx, &[0, 2, 1, 3]);
        let ctx = g.reshape(ctx, &[b, n, dim]);
        self.output.forward(g, ctx)
    }
}

/// Post-norm encoder layer: attention and a `D -> 2D -> D` ReLU FFN, each
/// wrapped in a residual connection and layer normalization.
#[derive(Clone, Debug)]
pub struct EncoderLayer {
    pub attention: SelfAttention,
    pub norm1: LayerNorm,
    pub ffn: Mlp2,
    pub norm2: LayerNorm,
}

impl EncoderLayer {
    pub fn new(store: &mut ParamStore, init: &mut Init, name: &str, dim: usize, heads: usize) -> Self {
        Self {
            attention: SelfAttention::new(store, init, &format!("{name}.attn"), dim, heads),
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), dim),
            ffn: Mlp2::new(store, init, &format!("{name}.ffn"), [dim, 2 * dim, dim]),
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), dim),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var, dropout: f64) -> Var {
        let a = self.attention.forward(g, x, dropout);
        let a = g.dropout(a, dropout);
        let x = g.add(x, a);
        let x = self.norm1.forward(g, x);
        let h = self.ffn.first.forward(g, x);
        let h = g.relu(h);
        let h = g.dropout(h, dropout);
        let f = self.ffn.second.forward(g, h);
        let f = g.dropout(f, dropout);
        let x = g.add(x, f);
        self.norm2.forward(g, x)
    }
}

/// Single-layer GRU with gate order (reset, update, candidate).
#[derive(Clone, Debug)]
pub struct Gru {
    pub input: Linear,
    pub hidden: Linear,
    pub dim: usize,
}

impl Gru {
    pub fn new(store: &mut ParamStore, init: &mut Init, name: &str, in_dim: usize, dim: usize) -> Self {
        Self {
            input: Linear::new(store, init, &format!("{name}.ih"), in_dim, 3 * dim),
            hidden: Linear::new(store, init, &format!("{name}.hh"), dim, 3 * dim),
            dim,
        }
    }

    /// One recurrence step: `x: [B, in], h: [B, dim] -> [B, dim]`.
    pub fn step(&self, g: &mut Graph, x: Var, h: Var) -> Var {
        let d = self.dim;
        let gi = self.input.forward(g, x);
        let gh = self.hidden.forward(g, h);
        let (ir, iz, inn) = (g.narrow(gi, 1, 0, d), g.narrow(gi, 1, d, d), g.narrow(gi, 1, 2 * d, d));
        let (hr, hz, hn) = (g.narrow(gh, 1, 0, d), g.narrow(gh, 1, d, d), g.narrow(gh, 1, 2 * d, d));
        let r = g.add(ir, hr);
        let r = g.sigmoid(r);
        let z = g.add(iz, hz);
        let z = g.sigmoid(z);
        let rn = g.mul(r, hn);
        let n = g.add(inn, rn);
        let n = g.tanh(n);
        let keep = g.mul(z, h);
        let inv = g.one_minus(z);
        let fresh = g.mul(inv, n);
        g.add(fresh, keep)
    }
}

/// Output of the temporal encoder for a batch of agents.
#[derive(Clone, Copy, Debug)]
pub struct TemporalFeatures {
    /// Per-step GRU outputs `[B, tokens, F]`.
    pub tokens: Var,
    /// Final hidden state `[B, F]`.
    pub last_hidden: Var,
}

#[derive(Clone, Debug)]
enum Backbone {
    Patched {
        patch_x: Mlp2,
        patch_y: Mlp2,
        fusion: GatedFusion,
        layers: Vec<EncoderLayer>,
        gru: Gru,
    },
    /// Plain perceptron over the flattened history (patching ablation).
    Flat { mlp: Mlp2 },
}

#[derive(Clone, Debug)]
pub struct TemporalEncoder {
    backbone: Backbone,
    obs_len: usize,
    patch_len: usize,
    tokens: usize,
    dim: usize,
    dropout: f64,
    positions: Tensor,
}

impl TemporalEncoder {
    pub fn new(store: &mut ParamStore, init: &mut Init, cfg: &ModelConfig) -> Self {
        let f = cfg.temporal_dim;
        let backbone = if cfg.no_patch {
            Backbone::Flat { mlp: Mlp2::new(store, init, "temporal.flat", [2 * cfg.obs_len, f, cfg.tokens() * f]) }
        } else {
            Backbone::Patched {
                patch_x: Mlp2::new(store, init, "temporal.patch_x", [cfg.patch_len, f, f]),
                patch_y: Mlp2::new(store, init, "temporal.patch_y", [cfg.patch_len, f, f]),
                fusion: GatedFusion::new(store, init, "temporal.fusion", f),
                layers: (0..cfg.transformer_layers)
                    .map(|i| EncoderLayer::new(store, init, &format!("temporal.encoder.{i}"), f, cfg.heads))
                    .collect(),
                gru: Gru::new(store, init, "temporal.gru", f, f),
            }
        };
        Self {
            backbone,
            obs_len: cfg.obs_len,
            patch_len: cfg.patch_len,
            tokens: cfg.tokens(),
            dim: f,
            dropout: cfg.dropout,
            positions: sinusoidal_positions(cfg.tokens(), f),
        }
    }

    fn patched(&self) -> Result<(&Mlp2, &Mlp2, &GatedFusion, &[EncoderLayer], &Gru)> {
        match &self.backbone {
            Backbone::Patched { patch_x, patch_y, fusion, layers, gru } => Ok((patch_x, patch_y, fusion, layers, gru)),
            Backbone::Flat { .. } => Err(Error::Config("patch stages are disabled by the no-patch ablation".into())),
        }
    }

    /// Sliding windows of one channel: `series: [B, T'] -> [B, tokens, P]`.
    fn unfold(&self, g: &mut Graph, series: Var) -> Var {
        let b = g.shape(series)[0];
        let windows: Vec<Var> = (0..self.tokens)
            .map(|i| {
                let w = g.narrow(series, 1, i, self.patch_len);
                g.reshape(w, &[b, 1, self.patch_len])
            })
            .collect();
        g.concat(&windows, 1)
    }

    fn channel(g: &mut Graph, history: Var, c: usize) -> Var {
        let (b, t) = (g.shape(history)[0], g.shape(history)[1]);
        let ch = g.narrow(history, 2, c, 1);
        g.reshape(ch, &[b, t])
    }

    /// `history: [B, T', 2] -> (Z_x, Z_y)`, each `[B, tokens, F]`.
    pub fn patch_embed(&self, g: &mut Graph, history: Var) -> Result<(Var, Var)> {
        let shape = g.shape(history).to_vec();
        if shape.len() != 3 || shape[2] != 2 {
            return Err(Error::Shape(format!("history must be [B, T', 2], got {shape:?}")));
        }
        if shape[1] < self.patch_len {
            return Err(Error::Shape(format!(
                "history of {} steps is shorter than the patch length {}",
                shape[1], self.patch_len
            )));
        }
        if shape[1] != self.obs_len {
            return Err(Error::Shape(format!("expected {} history steps, got {}", self.obs_len, shape[1])));
        }
        let (px, py, ..) = self.patched()?;
        let xs = Self::channel(g, history, 0);
        let ys = Self::channel(g, history, 1);
        let xw = self.unfold(g, xs);
        let yw = self.unfold(g, ys);
        Ok((px.forward(g, xw), py.forward(g, yw)))
    }

    /// Gated blend of the two channel token sets; returns `(Z, gate)`.
    pub fn gated_fuse(&self, g: &mut Graph, zx: Var, zy: Var) -> Result<(Var, Var)> {
        if g.shape(zx) != g.shape(zy) {
            return Err(Error::Shape(format!(
                "channel tokens differ: {:?} vs {:?}",
                g.shape(zx),
                g.shape(zy)
            )));
        }
        let (_, _, fusion, ..) = self.patched()?;
        Ok(fusion.forward(g, zx, zy))
    }

    pub fn transformer_encode(&self, g: &mut Graph, z: Var) -> Result<Var> {
        let (.., layers, _) = self.patched()?;
        let pe = g.constant(self.positions.clone());
        let mut x = g.add(z, pe);
        for layer in layers {
            x = layer.forward(g, x, self.dropout);
        }
        Ok(x)
    }

    /// Run the GRU over the tokens in order from a zero state.
    pub fn gru_refine(&self, g: &mut Graph, z: Var) -> Result<TemporalFeatures> {
        let (.., gru) = self.patched()?;
        let (b, n) = (g.shape(z)[0], g.shape(z)[1]);
        let mut h = g.constant(zeros(&[b, self.dim]));
        let mut outputs = Vec::with_capacity(n);
        for t in 0..n {
            let x = g.narrow(z, 1, t, 1);
            let x = g.reshape(x, &[b, self.dim]);
            h = gru.step(g, x, h);
            outputs.push(g.reshape(h, &[b, 1, self.dim]));
        }
        let tokens = g.concat(&outputs, 1);
        Ok(TemporalFeatures { tokens, last_hidden: h })
    }

    pub fn forward(&self, g: &mut Graph, history: Var) -> Result<TemporalFeatures> {
        match &self.backbone {
            Backbone::Flat { mlp } => {
                let b = g.shape(history)[0];
                let flat = g.reshape(history, &[b, 2 * self.obs_len]);
                let out = mlp.forward(g, flat);
                let tokens = g.reshape(out, &[b, self.tokens, self.dim]);
                let last = g.narrow(tokens, 1, self.tokens - 1, 1);
                let last_hidden = g.reshape(last, &[b, self.dim]);
                Ok(TemporalFeatures { tokens, last_hidden })
            }
            Backbone::Patched { .. } => {
                let (zx, zy) = self.patch_embed(g, history)?;
                let (z, _) = self.gated_fuse(g, zx, zy)?;
                let z = self.transformer_encode(g, z)?;
                self.gru_refine(g, z)
            }
        }
    }

    pub fn patch_mlps(&self) -> Option<(&Mlp2, &Mlp2)> {
        self.patched().ok().map(|(x, y, ..)| (x, y))
    }

    pub fn fusion(&self) -> Option<&GatedFusion> {
        self.patched().ok().map(|(_, _, f, ..)| f)
    }

    pub fn encoder_layers(&self) -> &[EncoderLayer] {
        self.patched().map(|(.., l, _)| l).unwrap_or(&[])
    }

    pub fn gru(&self) -> Option<&Gru> {
        self.patched().ok().map(|(.., g)| g)
    }
}

/// `[B, T', 2]` tensor from per-agent point lists.
pub fn history_tensor(histories: &[&[[f64; 2]]]) -> Tensor {
    let t = histories.first().map_or(0, |h| h.len());
    let mut data = Vec::with_capacity(histories.len() * t * 2);
    for h in histories {
        assert_eq!(h.len(), t, "all histories in a batch must share a length");
        for p in h.iter() {
            data.extend_from_slice(p);
        }
    }
    Tensor::from_shape_vec(IxDyn(&[histories.len(), t, 2]), data).unwrap()
}
