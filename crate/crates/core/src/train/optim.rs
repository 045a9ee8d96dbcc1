use serde::{Deserialize, Serialize};

use crate::autograd::{Gradients, Tensor};
use crate::params::{zeros, ParamId, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }
}

/// Adam with bias-corrected moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub hyper: AdamHyper,
    pub step: u64,
    pub first: Vec<Tensor>,
    pub second: Vec<Tensor>,
}

impl Adam {
    pub fn new(store: &ParamStore, hyper: AdamHyper) -> Self {
        let shapes: Vec<Vec<usize>> = store.ids().map(|id| store.value(id).shape().to_vec()).collect();
        Self {
            hyper,
            step: 0,
            first: shapes.iter().map(|s| zeros(s)).collect(),
            second: shapes.iter().map(|s| zeros(s)).collect(),
        }
    }

    /// Apply one update with learning rate `lr`; `scale` multiplies every
    /// gradient first (used for norm clipping).
    pub fn update(&mut self, store: &mut ParamStore, grads: &Gradients, lr: f64, scale: f64) {
        self.step += 1;
        let AdamHyper { beta1, beta2, eps, weight_decay } = self.hyper;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        let touched: Vec<(ParamId, Tensor)> = grads.params().map(|(id, g)| (id, g.clone())).collect();
        for (id, g) in touched {
            let i = id.index();
            let value = store.value_mut(id);
            let m = &mut self.first[i];
            let v = &mut self.second[i];
            ndarray::Zip::from(value).and(m).and(v).and(&g).for_each(|w, m, v, &g| {
                let g = g * scale + weight_decay * *w;
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let mh = *m / c1;
                let vh = *v / c2;
                *w -= lr * mh / (vh.sqrt() + eps);
            });
        }
    }
}

/// Global L2 norm over every parameter gradient.
pub fn grad_norm(grads: &Gradients) -> f64 {
    grads.params().map(|(_, g)| g.iter().map(|x| x * x).sum::<f64>()).sum::<f64>().sqrt()
}

/// Factor that brings `norm` down to `max_norm` (1 when already below).
pub fn clip_factor(norm: f64, max_norm: Option<f64>) -> f64 {
    match max_norm {
        Some(max) if norm > max && norm > 0.0 => max / norm,
        _ => 1.0,
    }
}
