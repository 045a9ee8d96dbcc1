use std::fmt;

use serde::{Deserialize, Serialize};

use crate::autograd::Graph;
use crate::data::{Neighbor, ObservationWindow};
use crate::error::Result;
use crate::model::{Batch, Model};

/// Parameter count reported by the original authors, in millions.
pub const REFERENCE_PARAMS_M: f64 = 0.043;
/// FLOPs reported by the original authors, in millions; convention unknown.
pub const REFERENCE_FLOPS_M: f64 = 1.828;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    /// Scalars in the parameters the forward pass reads; ablated branches are excluded.
    pub param_count: usize,
    /// Every scalar in the parameter store.
    pub stored_params: usize,
    /// Multiply-accumulates in one single-agent, one-neighbor forward pass.
    pub macs: u64,
    /// `2 * macs`.
    pub flops: u64,
    pub reference_params_m: f64,
    pub reference_flops_m: f64,
}

/// Probe window: one agent walking along x with one neighbor a metre to the side.
pub fn probe_window(obs_len: usize, pred_len: usize) -> ObservationWindow {
    let walk = |dy: f64| -> Vec<[f64; 2]> {
        (0..obs_len).map(|t| [(t as f64 - (obs_len - 1) as f64) * 0.4, dy]).collect()
    };
    ObservationWindow {
        scene: "probe".into(),
        agent_id: 0,
        anchor_frame: 0,
        origin: [0.0, 0.0],
        history: walk(0.0),
        future: (1..=pred_len).map(|t| [t as f64 * 0.4, 0.0]).collect(),
        neighbors: vec![Neighbor { agent_id: 1, history: walk(1.0) }],
        velocity: [0.4, 0.0],
    }
}

pub fn complexity_report(model: &Model) -> Result<ComplexityReport> {
    let w = probe_window(model.config.obs_len, model.config.pred_len);
    let batch = Batch::from_windows(&[&w])?;
    let mut g = Graph::new(&model.params);
    model.forward(&mut g, &batch)?;
    let macs = g.macs();
    let param_count = g.used_params().map(|id| model.params.value(id).len()).sum();
    Ok(ComplexityReport {
        param_count,
        stored_params: model.num_params(),
        macs,
        flops: 2 * macs,
        reference_params_m: REFERENCE_PARAMS_M,
        reference_flops_m: REFERENCE_FLOPS_M,
    })
}

impl fmt::Display for ComplexityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>14} {:>14}", "", "#Param (M)", "FLOPs (M)")?;
        writeln!(
            f,
            "{:<10} {:>14.3} {:>14.3}",
            "this",
            self.param_count as f64 / 1e6,
            self.flops as f64 / 1e6
        )?;
        writeln!(f, "{:<10} {:>14.3} {:>14.3}", "reference", self.reference_params_m, self.reference_flops_m)?;
        writeln!(f, "exact parameter count: {}", self.param_count)?;
        if self.stored_params != self.param_count {
            writeln!(f, "allocated but unused by this configuration: {}", self.stored_params - self.param_count)?;
        }
        writeln!(f, "multiply-accumulates: {} (FLOPs counted as 2 per MAC)", self.macs)?;
        write!(
            f,
            "note: the reference figures cannot be reached with the stated layer widths; \
             the K dedicated 6F->H->H projections alone exceed them by orders of magnitude, \
             and the reference FLOP convention is unknown. Treat the comparison as indicative."
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ModelConfig;

    fn small(cfg: ModelConfig) -> Model {
        let base = ModelConfig { temporal_dim: 8, social_dim: 8, social_out_dim: 8, latent_dim: 16, modes: 3, ..cfg };
        Model::new(base, 0).unwrap()
    }

    #[test]
    fn full_model_uses_every_parameter() {
        let r = complexity_report(&small(ModelConfig::default())).unwrap();
        assert_eq!(r.param_count, r.stored_params);
        assert_eq!(r.flops, 2 * r.macs);
        assert!(r.to_string().contains("0.043"));
    }

    #[test]
    fn ablated_social_branch_is_not_counted() {
        let r = complexity_report(&small(ModelConfig { no_social: true, ..ModelConfig::default() })).unwrap();
        assert!(r.param_count < r.stored_params);
        assert!(r.to_string().contains("unused"));
    }
}
