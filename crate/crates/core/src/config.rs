use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the social query attends over the `K` modality keys.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    /// One softmax across the `K` modalities per head.
    Softmax,
    /// Each modality attends only to itself, so the weight is always 1.
    Singleton,
}

/// Model dimensions and ablation switches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub obs_len: usize,
    pub pred_len: usize,
    pub patch_len: usize,
    /// Temporal feature width `F`.
    pub temporal_dim: usize,
    /// Node and edge feature width `S`.
    pub social_dim: usize,
    /// Social feature width `S'`.
    pub social_out_dim: usize,
    /// Modality latent width `H`.
    pub latent_dim: usize,
    /// Number of modalities `K`.
    pub modes: usize,
    pub heads: usize,
    pub transformer_layers: usize,
    pub dropout: f64,
    pub leaky_slope: f64,
    pub no_patch: bool,
    pub no_social: bool,
    /// Feed the raw displacement vector alongside its norm and cosine to the edge MLP.
    pub edge_raw_vector: bool,
    pub modulation: Modulation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            obs_len: 8,
            pred_len: 12,
            patch_len: 3,
            temporal_dim: 64,
            social_dim: 256,
            social_out_dim: 256,
            latent_dim: 1024,
            modes: 20,
            heads: 4,
            transformer_layers: 3,
            dropout: 0.1,
            leaky_slope: 0.2,
            no_patch: false,
            no_social: false,
            edge_raw_vector: false,
            modulation: Modulation::Softmax,
        }
    }
}

impl ModelConfig {
    /// Tokens produced by patching: `T' - P + 1`.
    pub fn tokens(&self) -> usize {
        self.obs_len + 1 - self.patch_len
    }

    pub fn edge_input_dim(&self) -> usize {
        if self.edge_raw_vector {
            3
        } else {
            2
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("obs_len", self.obs_len),
            ("pred_len", self.pred_len),
            ("patch_len", self.patch_len),
            ("temporal_dim", self.temporal_dim),
            ("social_dim", self.social_dim),
            ("social_out_dim", self.social_out_dim),
            ("latent_dim", self.latent_dim),
            ("modes", self.modes),
            ("heads", self.heads),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.obs_len < self.patch_len {
            return Err(Error::Config(format!(
                "history length {} is shorter than the patch length {}",
                self.obs_len, self.patch_len
            )));
        }
        if self.obs_len < 2 {
            return Err(Error::Config("history needs at least two steps for a pseudo-velocity".into()));
        }
        if self.temporal_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "temporal_dim {} is not divisible by {} heads",
                self.temporal_dim, self.heads
            )));
        }
        if self.social_out_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "social_out_dim {} is not divisible by {} heads",
                self.social_out_dim, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} must lie in [0, 1)", self.dropout)));
        }
        Ok(())
    }
}
