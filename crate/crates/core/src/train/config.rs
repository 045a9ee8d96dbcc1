use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ModelConfig;
use crate::data::{DatasetKind, EthUcyScene, WindowParams};
use crate::error::{Error, Result};
use crate::train::optim::AdamHyper;
use crate::train::schedule::CosineSchedule;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub dataset: DatasetKind,
    /// ETH/UCY scene held out for testing; unused for SDD.
    pub test_scene: Option<String>,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr0: f64,
    /// Learning rate reached at the final epoch.
    pub lr_floor: f64,
    pub seed: u64,
    pub max_dist: f64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub grad_clip: Option<f64>,
    /// Fraction of each scene's latest windows held out for model selection.
    pub val_fraction: f64,
    pub augment_rotation: bool,
    pub adam: AdamHyper,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::ethucy()
    }
}

impl TrainConfig {
    pub fn ethucy() -> Self {
        Self {
            dataset: DatasetKind::Ethucy,
            test_scene: None,
            batch_size: 32,
            epochs: 300,
            lr0: 5e-4,
            lr_floor: 0.0,
            seed: 0,
            max_dist: 10.0,
            grad_clip: Some(10.0),
            val_fraction: 0.1,
            augment_rotation: true,
            adam: AdamHyper::default(),
            model: ModelConfig::default(),
        }
    }

    pub fn sdd() -> Self {
        Self { dataset: DatasetKind::Sdd, batch_size: 128, epochs: 200, max_dist: 200.0, ..Self::ethucy() }
    }

    pub fn for_dataset(kind: DatasetKind) -> Self {
        match kind {
            DatasetKind::Ethucy => Self::ethucy(),
            DatasetKind::Sdd => Self::sdd(),
        }
    }

    /// Windowing parameters implied by the dataset and model lengths.
    pub fn window_params(&self) -> WindowParams {
        let base = match self.dataset {
            DatasetKind::Ethucy => WindowParams::ethucy(),
            DatasetKind::Sdd => WindowParams::sdd(),
        };
        WindowParams { obs_len: self.model.obs_len, pred_len: self.model.pred_len, max_dist: self.max_dist, ..base }
    }

    pub fn schedule(&self) -> CosineSchedule {
        CosineSchedule { lr0: self.lr0, floor: self.lr_floor, epochs: self.epochs }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be positive".into()));
        }
        if !(self.lr0 > 0.0) || self.lr_floor < 0.0 || self.lr_floor > self.lr0 {
            return Err(Error::Config(format!("need 0 <= lr_floor <= lr0 and lr0 > 0, got {} / {}", self.lr_floor, self.lr0)));
        }
        if !(self.max_dist > 0.0) {
            return Err(Error::Config("max_dist must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config("val_fraction must lie in [0, 1)".into()));
        }
        if let (DatasetKind::Ethucy, Some(scene)) = (self.dataset, &self.test_scene) {
            scene.parse::<EthUcyScene>()?;
        }
        if matches!(self.grad_clip, Some(c) if !(c > 0.0)) {
            return Err(Error::Config("grad_clip must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
