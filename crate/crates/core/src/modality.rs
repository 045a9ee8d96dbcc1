//! Explicit-modality decoder.
//!
//! Flattened temporal features are projected into `K` latents by `K`
//! dedicated perceptrons, aligned to the social width by one shared
//! perceptron, modulated by cross-attention against the agent's social
//! feature, refined by a Transformer-style residual block, and finally
//! regressed to trajectories and scored.

use crate::autograd::{Graph, Var};
use crate::config::{ModelConfig, Modulation};
use crate::params::{Init, LayerNorm, Linear, Mlp2, PRelu, ParamId, ParamStore};

/// `K` two-layer perceptrons `6F -> H -> H` with no shared weights.
///
/// The first layers are stored side by side as one `[6F, K*H]` matrix whose
/// column block `k` belongs to modality `k`; the second layers as `[K, H, H]`.
#[derive(Clone, Debug)]
pub struct ModalityProjection {
    pub first_weight: ParamId,
    pub first_bias: ParamId,
    pub second_weight: ParamId,
    pub second_bias: ParamId,
    pub in_dim: usize,
    pub latent_dim: usize,
    pub modes: usize,
}

impl ModalityProjection {
    pub fn new(store: &mut ParamStore, init: &mut Init, in_dim: usize, latent_dim: usize, modes: usize) -> Self {
        let b1 = 1.0 / (in_dim as f64).sqrt();
        let b2 = 1.0 / (latent_dim as f64).sqrt();
        Self {
            first_weight: store.add("modality.proj.0.weight", init.uniform(&[in_dim, modes * latent_dim], b1)),
            first_bias: store.add("modality.proj.0.bias", init.uniform(&[modes * latent_dim], b1)),
            second_weight: store.add("modality.proj.1.weight", init.uniform(&[modes, latent_dim, latent_dim], b2)),
            second_bias: store.add("modality.proj.1.bias", init.uniform(&[modes, 1, latent_dim], b2)),
            in_dim,
            latent_dim,
            modes,
        }
    }

    /// `[B, 6F] -> [B, K, H]`.
    pub fn forward(&self, g: &mut Graph, z: Var) -> Var {
        let b = g.shape(z)[0];
        let (k, h) = (self.modes, self.latent_dim);
        let w1 = g.param(self.first_weight);
        let b1 = g.param(self.first_bias);
        let x = g.matmul(z, w1);
        let x = g.add(x, b1);
        let x = g.relu(x);
        let x = g.reshape(x, &[b, k, h]);
        let x = g.permute(x, &[1, 0, 2]);
        let w2 = g.param(self.second_weight);
        let b2 = g.param(self.second_bias);
        let y = g.bmm(x, w2, false);
        let y = g.add(y, b2);
        g.permute(y, &[1, 0, 2])
    }
}

/// Social-query cross-attention over the `K` modality keys.
#[derive(Clone, Debug)]
pub struct ModalityModulation {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub heads: usize,
    pub mode: Modulation,
}

/// Modulated values `[B, K, S']` and weights `[B, heads, K]`.
#[derive(Clone, Copy, Debug)]
pub struct Modulated {
    pub values: Var,
    pub weights: Option<Var>,
}

impl ModalityModulation {
    pub fn new(store: &mut ParamStore, init: &mut Init, dim: usize, heads: usize, mode: Modulation) -> Self {
        Self {
            query: Linear::no_bias(store, init, "modality.mod.q", dim, dim),
            key: Linear::no_bias(store, init, "modality.mod.k", dim, dim),
            value: Linear::no_bias(store, init, "modality.mod.v", dim, dim),
            heads,
            mode,
        }
    }

    /// `social: [B, S']`, `latents: [B, K, S']`.
    pub fn forward(&self, g: &mut Graph, social: Var, latents: Var) -> Modulated {
        let (b, k, s) = {
            let sh = g.shape(latents);
            (sh[0], sh[1], sh[2])
        };
        let h = self.heads;
        let d = s / h;
        let v = self.value.forward(g, latents);
        if self.mode == Modulation::Singleton {
            return Modulated { values: v, weights: None };
        }
        let q = self.query.forward(g, social);
        let q = g.reshape(q, &[b * h, 1, d]);
        let key = self.key.forward(g, latents);
        let key = g.reshape(key, &[b, k, h, d]);
        let key = g.permute(key, &[0, 2, 1, 3]);
        let key = g.reshape(key, &[b * h, k, d]);
        let logits = g.bmm(q, key, true);
        let logits = g.scale(logits, 1.0 / (d as f64).sqrt());
        let w = g.softmax(logits);
        let w = g.reshape(w, &[b, h, k]);
        let wk = g.permute(w, &[0, 2, 1]);
        let wk = g.reshape(wk, &[b, k, h, 1]);
        let vh = g.reshape(v, &[b, k, h, d]);
        let out = g.mul(vh, wk);
        let out = g.reshape(out, &[b, k, s]);
        Modulated { values: out, weights: Some(w) }
    }
}

/// Residual + layer norm, FFN `S' -> 2S' -> S'`, residual + layer norm.
#[derive(Clone, Debug)]
pub struct DecodeBlock {
    pub norm1: LayerNorm,
    pub ffn: Mlp2,
    pub norm2: LayerNorm,
}

impl DecodeBlock {
    pub fn new(store: &mut ParamStore, init: &mut Init, dim: usize) -> Self {
        Self {
            norm1: LayerNorm::new(store, "modality.decode.norm1", dim),
            ffn: Mlp2::new(store, init, "modality.decode.ffn", [dim, 2 * dim, dim]),
            norm2: LayerNorm::new(store, "modality.decode.norm2", dim),
        }
    }

    pub fn forward(&self, g: &mut Graph, latents: Var, modulated: Var) -> Var {
        let a = g.add(latents, modulated);
        let a = self.norm1.forward(g, a);
        let f = self.ffn.forward(g, a);
        let x = g.add(a, f);
        self.norm2.forward(g, x)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct HeadOutput {
    /// `[B, K, T, 2]`, offsets from each agent's `t = 0` position.
    pub trajectories: Var,
    /// Pre-softmax scores `[B, K]`.
    pub logits: Var,
    /// `[B, K]`, rows sum to one.
    pub probabilities: Var,
    pub modulation_weights: Option<Var>,
}

#[derive(Clone, Debug)]
pub struct ModalityHead {
    pub projection: ModalityProjection,
    pub align: Linear,
    pub align_activation: PRelu,
    pub modulation: ModalityModulation,
    pub decode: DecodeBlock,
    pub regress: Linear,
    pub score: Linear,
    pred_len: usize,
}

impl ModalityHead {
    pub fn new(store: &mut ParamStore, init: &mut Init, cfg: &ModelConfig) -> Self {
        let s = cfg.social_out_dim;
        Self {
            projection: ModalityProjection::new(
                store,
                init,
                cfg.tokens() * cfg.temporal_dim,
                cfg.latent_dim,
                cfg.modes,
            ),
            align: Linear::new(store, init, "modality.align", cfg.latent_dim, s),
            align_activation: PRelu::new(store, "modality.align_prelu"),
            modulation: ModalityModulation::new(store, init, s, cfg.heads, cfg.modulation),
            decode: DecodeBlock::new(store, init, s),
            regress: Linear::new(store, init, "modality.regress", s, 2 * cfg.pred_len),
            score: Linear::new(store, init, "modality.score", s, 1),
            pred_len: cfg.pred_len,
        }
    }

    /// Shared `H -> S'` perceptron with PReLU: `[B, K, H] -> [B, K, S']`.
    pub fn align_modalities(&self, g: &mut Graph, latents: Var) -> Var {
        let x = self.align.forward(g, latents);
        self.align_activation.forward(g, x)
    }

    /// Shared affine map to `[B, K, T, 2]`.
    pub fn regress_trajectories(&self, g: &mut Graph, decoded: Var) -> Var {
        let (b, k) = (g.shape(decoded)[0], g.shape(decoded)[1]);
        let y = self.regress.forward(g, decoded);
        g.reshape(y, &[b, k, self.pred_len, 2])
    }

    /// Shared scalar score per modality, softmax over `K`. Returns `(logits, P)`.
    pub fn score_modalities(&self, g: &mut Graph, decoded: Var) -> (Var, Var) {
        let (b, k) = (g.shape(decoded)[0], g.shape(decoded)[1]);
        let s = self.score.forward(g, decoded);
        let logits = g.reshape(s, &[b, k]);
        (logits, g.softmax(logits))
    }

    /// `temporal: [B, 6F]`, `social: [B, S']`.
    pub fn forward(&self, g: &mut Graph, temporal: Var, social: Var) -> HeadOutput {
        let latents = self.projection.forward(g, temporal);
        let aligned = self.align_modalities(g, latents);
        let modulated = self.modulation.forward(g, social, aligned);
        let decoded = self.decode.forward(g, aligned, modulated.values);
        let trajectories = self.regress_trajectories(g, decoded);
        let (logits, probabilities) = self.score_modalities(g, decoded);
        HeadOutput { trajectories, logits, probabilities, modulation_weights: modulated.weights }
    }
}
