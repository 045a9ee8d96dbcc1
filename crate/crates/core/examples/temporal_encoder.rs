//! Run the patch temporal encoder on one curved history and inspect each stage.

use trajcast::autograd::Graph;
use trajcast::model::Model;
use trajcast::temporal::history_tensor;
use trajcast::ModelConfig;

fn main() -> trajcast::Result<()> {
    let cfg = ModelConfig { temporal_dim: 16, heads: 4, dropout: 0.0, ..ModelConfig::default() };
    let model = Model::new(cfg, 3)?;
    let enc = &model.temporal;

    let history: Vec<[f64; 2]> = (0..8).map(|t| {
        let s = t as f64 - 7.0;
        [0.4 * s, 0.02 * s * s]
    }).collect();
    let mut g = Graph::new(&model.params);
    let x = g.constant(history_tensor(&[history.as_slice()]));

    let (zx, zy) = enc.patch_embed(&mut g, x)?;
    println!("patch tokens per channel: {:?}", g.shape(zx));
    let (z, gate) = enc.gated_fuse(&mut g, zx, zy)?;
    let w = g.value(gate);
    println!("gate mean {:.3}, min {:.3}, max {:.3}", w.mean().unwrap(), w.fold(1.0, |a, &b| f64::min(a, b)), w.fold(0.0, |a, &b| f64::max(a, b)));
    let encoded = enc.transformer_encode(&mut g, z)?;
    let feats = enc.gru_refine(&mut g, encoded)?;
    println!("refined tokens: {:?}", g.shape(feats.tokens));
    let last: Vec<String> = g.value(feats.last_hidden).iter().take(6).map(|v| format!("{v:+.3}")).collect();
    println!("last hidden state (first 6): {}", last.join(" "));
    Ok(())
}
