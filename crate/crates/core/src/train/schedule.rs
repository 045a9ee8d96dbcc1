use serde::{Deserialize, Serialize};

/// Cosine annealing from `lr0` at epoch 0 to `floor` at the last epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosineSchedule {
    pub lr0: f64,
    pub floor: f64,
    pub epochs: usize,
}

impl CosineSchedule {
    pub fn lr(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.lr0;
        }
        let progress = epoch.min(self.epochs - 1) as f64 / (self.epochs - 1) as f64;
        self.floor + 0.5 * (self.lr0 - self.floor) * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}
