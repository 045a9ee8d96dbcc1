//! Multi-agent trajectory forecasting.
//!
//! Each agent's observed history is patched into short sliding windows and
//! encoded by a Transformer + GRU stack; neighbors are aggregated through
//! a directed graph whose edges carry rotation- and translation-invariant
//! polar geometry; `K` explicit modality latents are modulated by the
//! social feature and decoded into `K` trajectories with probabilities.

pub mod autograd;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod interchange;
pub mod modality;
pub mod model;
pub mod params;
pub mod plot;
pub mod social;
pub mod temporal;
pub mod train;

pub use config::{ModelConfig, Modulation};
pub use error::{Error, Result};
pub use model::{Model, Predictor};
