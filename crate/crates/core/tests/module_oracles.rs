//! Forward passes of every stage against plain-loop recomputation from the
//! stored weights.

#[macro_use]
mod common;

use common::*;
use trajcast::autograd::Graph;
use trajcast::config::{ModelConfig, Modulation};
use trajcast::modality::{DecodeBlock, ModalityModulation, ModalityProjection};
use trajcast::model::{Batch, Model};
use trajcast::params::{Linear, ParamStore};
use trajcast::social::{SocialEncoder, SocialGraph};
use trajcast::temporal::{SelfAttention, TemporalEncoder, Gru, EncoderLayer};

const TOL: f64 = 1e-12;

fn zero_biases(store: &mut ParamStore) {
    let ids: Vec<_> = store.ids().filter(|&id| store.name(id).ends_with("bias")).collect();
    for id in ids {
        store.value_mut(id).fill(0.0);
    }
}

fn values(g: &Graph, v: trajcast::autograd::Var) -> Vec<f64> {
    g.value(v).iter().copied().collect()
}

fn encoder_config(obs_len: usize, f: usize, heads: usize) -> ModelConfig {
    ModelConfig { obs_len, temporal_dim: f, heads, transformer_layers: 1, dropout: 0.0, ..ModelConfig::default() }
}

pub fn patch_embed_two_windows() {
    let cfg = encoder_config(4, 4, 1);
    let (store, enc) = with_init(11, |s, i| TemporalEncoder::new(s, i, &cfg));
    let hist = vec![0.3, -1.2, 0.7, 0.4, -0.5, 0.9, 0.0, 0.0];
    let mut g = Graph::new(&store);
    let x = g.constant(tensor(&[1, 4, 2], hist.clone()));
    let (zx, zy) = enc.patch_embed(&mut g, x).unwrap();
    assert_eq!(g.shape(zx), &[1, 2, 4]);
    let xs: Vec<f64> = (0..4).map(|t| hist[2 * t]).collect();
    let ys: Vec<f64> = (0..4).map(|t| hist[2 * t + 1]).collect();
    let (px, py) = enc.patch_mlps().unwrap();
    let want_x: Vec<f64> = (0..2).flat_map(|i| mlp2(&store, px, &xs[i..i + 3])).collect();
    let want_y: Vec<f64> = (0..2).flat_map(|i| mlp2(&store, py, &ys[i..i + 3])).collect();
    assert_close(&values(&g, zx), &want_x, TOL);
    assert_close(&values(&g, zy), &want_y, TOL);
}

pub fn patch_embed_zero_history_zero_bias() {
    let cfg = encoder_config(8, 8, 2);
    let (mut store, enc) = with_init(3, |s, i| TemporalEncoder::new(s, i, &cfg));
    zero_biases(&mut store);
    let mut g = Graph::new(&store);
    let x = g.constant(tensor(&[1, 8, 2], vec![0.0; 16]));
    let (zx, zy) = enc.patch_embed(&mut g, x).unwrap();
    assert_eq!(g.shape(zx), &[1, 6, 8]);
    assert!(g.value(zx).iter().chain(g.value(zy).iter()).all(|&v| v == 0.0));
}

pub fn short_history_is_rejected() {
    let cfg = encoder_config(8, 8, 2);
    let (store, enc) = with_init(3, |s, i| TemporalEncoder::new(s, i, &cfg));
    let mut g = Graph::new(&store);
    let x = g.constant(tensor(&[1, 2, 2], vec![0.0; 4]));
    assert!(enc.patch_embed(&mut g, x).is_err());
}

pub fn gated_fuse_one_token() {
    let cfg = encoder_config(3, 4, 1);
    let (store, enc) = with_init(5, |s, i| TemporalEncoder::new(s, i, &cfg));
    let mut r = rng(9);
    let zx = uniform_data(&mut r, 4, 1.0);
    let zy = uniform_data(&mut r, 4, 1.0);
    let mut g = Graph::new(&store);
    let a = g.constant(tensor(&[1, 1, 4], zx.clone()));
    let b = g.constant(tensor(&[1, 1, 4], zy.clone()));
    let (z, w) = enc.gated_fuse(&mut g, a, b).unwrap();
    let cat: Vec<f64> = zx.iter().chain(&zy).copied().collect();
    let gate: Vec<f64> = linear(&store, &enc.fusion().unwrap().gate, &cat).into_iter().map(sigmoid).collect();
    let want: Vec<f64> = (0..4).map(|i| gate[i] * zx[i] + (1.0 - gate[i]) * zy[i]).collect();
    assert_close(&values(&g, w), &gate, TOL);
    assert_close(&values(&g, z), &want, TOL);
}

pub fn gated_fuse_zero_gate_and_equal_inputs() {
    let cfg = encoder_config(3, 4, 1);
    let (mut store, enc) = with_init(5, |s, i| TemporalEncoder::new(s, i, &cfg));
    let gate = &enc.fusion().unwrap().gate;
    store.value_mut(gate.weight).fill(0.0);
    store.value_mut(gate.bias.unwrap()).fill(0.0);
    let zx = vec![1.0, -2.0, 3.0, 0.5];
    let zy = vec![-1.0, 4.0, 1.0, 0.5];
    let mut g = Graph::new(&store);
    let a = g.constant(tensor(&[1, 1, 4], zx.clone()));
    let b = g.constant(tensor(&[1, 1, 4], zy.clone()));
    let (z, w) = enc.gated_fuse(&mut g, a, b).unwrap();
    assert!(g.value(w).iter().all(|&v| v == 0.5));
    assert_close(&values(&g, z), &[0.0, 1.0, 2.0, 0.5], TOL);
    let (z, _) = enc.gated_fuse(&mut g, a, a).unwrap();
    assert_close(&values(&g, z), &zx, TOL);
    let c = g.constant(tensor(&[1, 2, 4], vec![0.0; 8]));
    assert!(enc.gated_fuse(&mut g, a, c).is_err());
}

/// Single-head attention over `n` tokens of width `d`, then the output projection.
fn attention_oracle(store: &ParamStore, att: &SelfAttention, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let heads = att.heads;
    let dim = x[0].len();
    let d = dim / heads;
    let q: Vec<Vec<f64>> = x.iter().map(|t| linear(store, &att.query, t)).collect();
    let k: Vec<Vec<f64>> = x.iter().map(|t| linear(store, &att.key, t)).collect();
    let v: Vec<Vec<f64>> = x.iter().map(|t| linear(store, &att.value, t)).collect();
    let mut ctx = vec![vec![0.0; dim]; x.len()];
    for h in 0..heads {
        let r = h * d..(h + 1) * d;
        for i in 0..x.len() {
            let scores: Vec<f64> = (0..x.len())
                .map(|j| q[i][r.clone()].iter().zip(&k[j][r.clone()]).map(|(a, b)| a * b).sum::<f64>() / (d as f64).sqrt())
                .collect();
            let w = softmax(&scores);
            for (j, wj) in w.iter().enumerate() {
                for c in r.clone() {
                    ctx[i][c] += wj * v[j][c];
                }
            }
        }
    }
    ctx.iter().map(|c| linear(store, &att.output, c)).collect()
}

pub fn attention_two_tokens_one_head() {
    let (store, att) = with_init(21, |s, i| SelfAttention::new(s, i, "att", 4, 1));
    let x = vec![vec![0.5, -0.3, 1.1, 0.2], vec![-0.7, 0.8, 0.1, -1.4]];
    let mut g = Graph::new(&store);
    let xv = g.constant(tensor(&[1, 2, 4], x.concat()));
    let y = att.forward(&mut g, xv, 0.0);
    assert_close(&values(&g, y), &attention_oracle(&store, &att, &x).concat(), TOL);
}

pub fn encoder_layer_matches_post_norm_recipe() {
    let (mut store, layer) = with_init(22, |s, i| EncoderLayer::new(s, i, "enc", 4, 2));
    let mut r = rng(1);
    for id in [layer.norm1.gain, layer.norm1.shift, layer.norm2.gain, layer.norm2.shift] {
        let v = uniform_data(&mut r, 4, 1.0);
        store.value_mut(id).assign(&tensor(&[4], v));
    }
    let x = vec![uniform_data(&mut r, 4, 1.0), uniform_data(&mut r, 4, 1.0), uniform_data(&mut r, 4, 1.0)];
    let att = attention_oracle(&store, &layer.attention, &x);
    let n1 = |v: &[f64]| layer_norm(v, &flat(&store, layer.norm1.gain), &flat(&store, layer.norm1.shift), 1e-5);
    let n2 = |v: &[f64]| layer_norm(v, &flat(&store, layer.norm2.gain), &flat(&store, layer.norm2.shift), 1e-5);
    let want: Vec<f64> = x
        .iter()
        .zip(&att)
        .flat_map(|(xi, ai)| {
            let a = n1(&add(xi, ai));
            n2(&add(&a, &mlp2(&store, &layer.ffn, &a)))
        })
        .collect();
    let mut g = Graph::new(&store);
    let xv = g.constant(tensor(&[1, 3, 4], x.concat()));
    let y = layer.forward(&mut g, xv, 0.0);
    assert_close(&values(&g, y), &want, 1e-10);
}

pub fn transformer_is_deterministic_and_shape_preserving() {
    let cfg = ModelConfig { dropout: 0.1, ..encoder_config(8, 64, 4) };
    let cfg = ModelConfig { transformer_layers: 3, ..cfg };
    let (store, enc) = with_init(2, |s, i| TemporalEncoder::new(s, i, &cfg));
    let mut r = rng(4);
    let z = tensor(&[1, 6, 64], uniform_data(&mut r, 6 * 64, 1.0));
    let run = || {
        let mut g = Graph::new(&store);
        let zv = g.constant(z.clone());
        let y = enc.transformer_encode(&mut g, zv).unwrap();
        g.value(y).clone()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.shape(), &[1, 6, 64]);
    assert_eq!(a, b);
}

fn gru_oracle(store: &ParamStore, gru: &Gru, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = gru.dim;
    let mut h = vec![0.0; d];
    let mut out = Vec::new();
    for x in xs {
        let gi = linear(store, &gru.input, x);
        let gh = linear(store, &gru.hidden, &h);
        let r: Vec<f64> = (0..d).map(|i| sigmoid(gi[i] + gh[i])).collect();
        let z: Vec<f64> = (0..d).map(|i| sigmoid(gi[d + i] + gh[d + i])).collect();
        let n: Vec<f64> = (0..d).map(|i| (gi[2 * d + i] + r[i] * gh[2 * d + i]).tanh()).collect();
        h = (0..d).map(|i| (1.0 - z[i]) * n[i] + z[i] * h[i]).collect();
        out.push(h.clone());
    }
    out
}

pub fn gru_three_tokens_unrolled() {
    let cfg = encoder_config(5, 3, 1);
    let (store, enc) = with_init(31, |s, i| TemporalEncoder::new(s, i, &cfg));
    let mut r = rng(8);
    let xs: Vec<Vec<f64>> = (0..3).map(|_| uniform_data(&mut r, 3, 1.5)).collect();
    let mut g = Graph::new(&store);
    let z = g.constant(tensor(&[1, 3, 3], xs.concat()));
    let feats = enc.gru_refine(&mut g, z).unwrap();
    let want = gru_oracle(&store, enc.gru().unwrap(), &xs);
    assert_close(&values(&g, feats.tokens), &want.concat(), TOL);
    assert_close(&values(&g, feats.last_hidden), &want[2], TOL);
}

pub fn gru_single_token_and_zero_fixed_point() {
    let cfg = encoder_config(3, 4, 1);
    let (mut store, enc) = with_init(32, |s, i| TemporalEncoder::new(s, i, &cfg));
    let mut g = Graph::new(&store);
    let z = g.constant(tensor(&[1, 1, 4], vec![0.3, 0.1, -0.2, 0.5]));
    let feats = enc.gru_refine(&mut g, z).unwrap();
    assert_eq!(g.shape(feats.tokens), &[1, 1, 4]);
    zero_biases(&mut store);
    let mut g = Graph::new(&store);
    let z = g.constant(tensor(&[1, 4, 4], vec![0.0; 16]));
    let feats = enc.gru_refine(&mut g, z).unwrap();
    assert!(g.value(feats.tokens).iter().all(|&v| v == 0.0));
}

fn social_config() -> ModelConfig {
    ModelConfig { social_dim: 4, social_out_dim: 4, heads: 2, ..ModelConfig::default() }
}

pub fn edge_mlp_matches_manual() {
    let cfg = social_config();
    let (store, enc) = with_init(41, |s, i| SocialEncoder::new(s, i, &cfg));
    let feats = vec![vec![1.5, 0.3], vec![0.2, -0.9]];
    let mut g = Graph::new(&store);
    let f = g.constant(tensor(&[2, 2], feats.concat()));
    let e = enc.embed_edges(&mut g, f);
    let want: Vec<f64> = feats.iter().flat_map(|x| mlp2(&store, &enc.edge_mlp, x)).collect();
    assert_close(&values(&g, e), &want, TOL);
}

pub fn edge_mlp_zero_input_and_equal_geometry() {
    let cfg = social_config();
    let (mut store, enc) = with_init(41, |s, i| SocialEncoder::new(s, i, &cfg));
    let mut g = Graph::new(&store);
    let f = g.constant(tensor(&[2, 2], vec![0.7, 0.1, 0.7, 0.1]));
    let out_var = enc.embed_edges(&mut g, f);
    let e = values(&g, out_var);
    assert_eq!(e[..4], e[4..]);
    zero_biases(&mut store);
    let mut g = Graph::new(&store);
    let f = g.constant(tensor(&[1, 2], vec![0.0, 0.0]));
    let e = enc.embed_edges(&mut g, f);
    assert!(g.value(e).iter().all(|&v| v == 0.0));
}

fn node_oracle(store: &ParamStore, enc: &SocialEncoder, hist: &[[f64; 2]]) -> Vec<f64> {
    let xs: Vec<f64> = hist.iter().map(|p| p[0]).collect();
    let ys: Vec<f64> = hist.iter().map(|p| p[1]).collect();
    let hx = linear(store, &enc.node_x, &xs);
    let hy = linear(store, &enc.node_y, &ys);
    let cat: Vec<f64> = hx.iter().chain(&hy).copied().collect();
    let w: Vec<f64> = linear(store, &enc.node_fusion.gate, &cat).into_iter().map(sigmoid).collect();
    (0..hx.len()).map(|i| w[i] * hx[i] + (1.0 - w[i]) * hy[i]).collect()
}

pub fn node_embedding_matches_manual_and_bounds() {
    let cfg = social_config();
    let (mut store, enc) = with_init(42, |s, i| SocialEncoder::new(s, i, &cfg));
    let hist: Vec<[f64; 2]> = (0..8).map(|t| [0.3 * t as f64 - 2.1, 0.1 * (t as f64).powi(2) - 4.9]).collect();
    let mut g = Graph::new(&store);
    let h = g.constant(tensor(&[1, 8, 2], hist.iter().flatten().copied().collect()));
    let out_var = enc.embed_nodes(&mut g, h);
    let got = values(&g, out_var);
    assert_close(&got, &node_oracle(&store, &enc, &hist), TOL);
    // same series on both channels: the fused value lies between the two projections
    let same: Vec<[f64; 2]> = hist.iter().map(|p| [p[0], p[0]]).collect();
    let mut g = Graph::new(&store);
    let h = g.constant(tensor(&[1, 8, 2], same.iter().flatten().copied().collect()));
    let out_var = enc.embed_nodes(&mut g, h);
    let got = values(&g, out_var);
    let xs: Vec<f64> = same.iter().map(|p| p[0]).collect();
    let (hx, hy) = (linear(&store, &enc.node_x, &xs), linear(&store, &enc.node_y, &xs));
    for i in 0..4 {
        assert!(got[i] >= hx[i].min(hy[i]) - 1e-12 && got[i] <= hx[i].max(hy[i]) + 1e-12);
    }
    zero_biases(&mut store);
    let mut g = Graph::new(&store);
    let h = g.constant(tensor(&[1, 8, 2], vec![0.0; 16]));
    let out_var = enc.embed_nodes(&mut g, h);
    assert!(values(&g, out_var).iter().all(|&v| v == 0.0));
}

pub fn gnn_three_neighbors_matches_manual() {
    let cfg = social_config();
    let (mut store, enc) = with_init(43, |s, i| SocialEncoder::new(s, i, &cfg));
    store.value_mut(enc.activation.slope).fill(0.1);
    let w = line_window(1, [0.3, 0.1], &[[1.0, 2.0], [-3.0, 0.5], [2.5, -2.5]], 8, 12);
    let graph = SocialGraph::from_windows(&[&w]);
    let mut g = Graph::new(&store);
    let out = enc.forward(&mut g, &graph);
    let got: Vec<f64> = g.value(out.features).iter().take(4).copied().collect();

    let local = |h: &[[f64; 2]]| -> Vec<[f64; 2]> { h.iter().map(|p| [p[0] - h[7][0], p[1] - h[7][1]]).collect() };
    let h_i = node_oracle(&store, &enc, &local(&w.history));
    let mut logits = Vec::new();
    let mut msgs = Vec::new();
    for n in &w.neighbors {
        let h_j = node_oracle(&store, &enc, &local(&n.history));
        let d = [w.history[7][0] - n.history[7][0], w.history[7][1] - n.history[7][1]];
        let dn = d[0].hypot(d[1]);
        let cos = (d[0] * w.velocity[0] + d[1] * w.velocity[1]) / (dn * w.velocity[0].hypot(w.velocity[1]));
        let e = mlp2(&store, &enc.edge_mlp, &[dn, cos]);
        let cat: Vec<f64> = h_i.iter().chain(&h_j).chain(&e).copied().collect();
        logits.push(linear(&store, &enc.attn_logit, &cat).iter().map(|&u| if u > 0.0 { u } else { 0.2 * u }).collect::<Vec<_>>());
        msgs.push(linear(&store, &enc.message, &h_j));
    }
    let mut summed = vec![0.0; 4];
    for head in 0..2 {
        let alpha = softmax(&logits.iter().map(|l| l[head]).collect::<Vec<_>>());
        for (j, a) in alpha.iter().enumerate() {
            for c in head * 2..head * 2 + 2 {
                summed[c] += a * msgs[j][c];
            }
        }
    }
    assert_close(&got, &prelu(&summed, 0.1), 1e-12);
    // neighbors have no in-edges and fall back to the isolated vector
    let iso = flat(&store, enc.isolated);
    let rows: Vec<f64> = g.value(out.features).iter().skip(4).copied().collect();
    for r in rows.chunks(4) {
        assert_eq!(r, iso.as_slice());
    }
}

pub fn gnn_attention_normalization_cases() {
    let cfg = social_config();
    let (store, enc) = with_init(44, |s, i| SocialEncoder::new(s, i, &cfg));
    let single = line_window(1, [0.3, 0.0], &[[1.0, 1.0]], 8, 12);
    let twins = line_window(2, [0.3, 0.0], &[[1.0, 1.0], [1.0, 1.0]], 8, 12);
    let graph = SocialGraph::from_windows(&[&single, &twins]);
    let mut g = Graph::new(&store);
    let out = enc.forward(&mut g, &graph);
    let alpha = g.value(out.attention.unwrap());
    assert_eq!(alpha.shape(), &[3, 2]);
    for h in 0..2 {
        assert_eq!(alpha[[0, h]], 1.0);
        assert!((alpha[[1, h]] - 0.5).abs() < 1e-15 && (alpha[[2, h]] - 0.5).abs() < 1e-15);
    }
}

pub fn projection_two_modalities() {
    let (store, proj) = with_init(51, |s, i| ModalityProjection::new(s, i, 6, 5, 2));
    let mut r = rng(2);
    let z = uniform_data(&mut r, 6, 1.0);
    let mut g = Graph::new(&store);
    let zv = g.constant(tensor(&[1, 6], z.clone()));
    let y = proj.forward(&mut g, zv);
    assert_eq!(g.shape(y), &[1, 2, 5]);
    let w1 = mat(&store, proj.first_weight);
    let b1 = flat(&store, proj.first_bias);
    let w2 = store.value(proj.second_weight);
    let b2 = store.value(proj.second_bias);
    let mut want = Vec::new();
    for k in 0..2 {
        let block: Mat = w1.iter().map(|row| row[k * 5..(k + 1) * 5].to_vec()).collect();
        let hidden = relu(&affine(&z, &block, Some(&b1[k * 5..(k + 1) * 5])));
        let wk: Mat = (0..5).map(|i| (0..5).map(|j| w2[[k, i, j]]).collect()).collect();
        let bk: Vec<f64> = (0..5).map(|j| b2[[k, 0, j]]).collect();
        want.extend(affine(&hidden, &wk, Some(&bk)));
    }
    let got = values(&g, y);
    assert_close(&got, &want, TOL);
    assert_ne!(got[..5], got[5..]);
}

pub fn projection_zero_input_zero_bias() {
    let (mut store, proj) = with_init(52, |s, i| ModalityProjection::new(s, i, 6, 5, 3));
    zero_biases(&mut store);
    let mut g = Graph::new(&store);
    let zv = g.constant(tensor(&[1, 6], vec![0.0; 6]));
    let y = proj.forward(&mut g, zv);
    assert!(g.value(y).iter().all(|&v| v == 0.0));
}

fn head_model(modes: usize) -> Model {
    let cfg = ModelConfig { modes, social_out_dim: 4, social_dim: 4, latent_dim: 6, temporal_dim: 4, heads: 2, ..toy_config() };
    Model::new(cfg, 61).unwrap()
}

pub fn align_shared_prelu() {
    let mut model = head_model(3);
    model.params.value_mut(model.head.align_activation.slope).fill(0.05);
    let mut r = rng(3);
    let f = uniform_data(&mut r, 6, 1.0);
    let latents: Vec<f64> = [f.clone(), uniform_data(&mut r, 6, 1.0), f.clone()].concat();
    let mut g = Graph::new(&model.params);
    let x = g.constant(tensor(&[1, 3, 6], latents.clone()));
    let out_var = model.head.align_modalities(&mut g, x);
    let y = values(&g, out_var);
    let want: Vec<f64> = latents.chunks(6).flat_map(|c| prelu(&linear(&model.params, &model.head.align, c), 0.05)).collect();
    assert_close(&y, &want, TOL);
    assert_eq!(y[..4], y[8..]);
}

fn modulation_oracle(store: &ParamStore, m: &ModalityModulation, social: &[f64], latents: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let s = social.len();
    let d = s / m.heads;
    let q = linear(store, &m.query, social);
    let keys: Vec<Vec<f64>> = latents.iter().map(|f| linear(store, &m.key, f)).collect();
    let vals: Vec<Vec<f64>> = latents.iter().map(|f| linear(store, &m.value, f)).collect();
    let mut out = vals.clone();
    let mut weights = Vec::new();
    for h in 0..m.heads {
        let r = h * d..(h + 1) * d;
        let logits: Vec<f64> = keys
            .iter()
            .map(|k| q[r.clone()].iter().zip(&k[r.clone()]).map(|(a, b)| a * b).sum::<f64>() / (d as f64).sqrt())
            .collect();
        let w = softmax(&logits);
        for (k, wk) in w.iter().enumerate() {
            for c in r.clone() {
                out[k][c] = wk * vals[k][c];
            }
        }
        weights.push(w);
    }
    (out, weights)
}

pub fn modulation_three_modalities() {
    let (store, m) = with_init(71, |s, i| ModalityModulation::new(s, i, 4, 2, Modulation::Softmax));
    let mut r = rng(5);
    let social = uniform_data(&mut r, 4, 1.0);
    let latents: Vec<Vec<f64>> = (0..3).map(|_| uniform_data(&mut r, 4, 1.0)).collect();
    let mut g = Graph::new(&store);
    let sv = g.constant(tensor(&[1, 4], social.clone()));
    let lv = g.constant(tensor(&[1, 3, 4], latents.concat()));
    let out = m.forward(&mut g, sv, lv);
    let (want, weights) = modulation_oracle(&store, &m, &social, &latents);
    assert_close(&values(&g, out.values), &want.concat(), TOL);
    assert_close(&values(&g, out.weights.unwrap()), &weights.concat(), TOL);
}

pub fn modulation_symmetric_singleton_and_literal() {
    let (store, m) = with_init(72, |s, i| ModalityModulation::new(s, i, 4, 2, Modulation::Softmax));
    let same = vec![0.4, -0.2, 0.9, 0.1];
    let social = vec![1.0, 0.5, -0.5, 0.2];
    let v = linear(&store, &m.value, &same);
    let mut g = Graph::new(&store);
    let sv = g.constant(tensor(&[1, 4], social.clone()));
    let lv = g.constant(tensor(&[1, 4, 4], same.repeat(4)));
    let out = m.forward(&mut g, sv, lv);
    assert!(g.value(out.weights.unwrap()).iter().all(|w| (w - 0.25).abs() < 1e-15));
    assert_close(&values(&g, out.values), &v.iter().map(|x| x / 4.0).collect::<Vec<_>>().repeat(4), TOL);
    let one = g.constant(tensor(&[1, 1, 4], same.clone()));
    let out = m.forward(&mut g, sv, one);
    assert_close(&values(&g, out.values), &v, TOL);
    let literal = ModalityModulation { mode: Modulation::Singleton, ..m.clone() };
    let out = literal.forward(&mut g, sv, lv);
    assert!(out.weights.is_none());
    assert_close(&values(&g, out.values), &v.repeat(4), TOL);
}

pub fn decode_block_one_modality() {
    let (mut store, block) = with_init(81, |s, i| DecodeBlock::new(s, i, 4));
    let mut r = rng(6);
    for id in [block.norm1.gain, block.norm1.shift, block.norm2.gain, block.norm2.shift] {
        let v = uniform_data(&mut r, 4, 1.0);
        store.value_mut(id).assign(&tensor(&[4], v));
    }
    let f = uniform_data(&mut r, 4, 1.0);
    let a = uniform_data(&mut r, 4, 1.0);
    let n1 = layer_norm(&add(&f, &a), &flat(&store, block.norm1.gain), &flat(&store, block.norm1.shift), 1e-5);
    let want = layer_norm(
        &add(&n1, &mlp2(&store, &block.ffn, &n1)),
        &flat(&store, block.norm2.gain),
        &flat(&store, block.norm2.shift),
        1e-5,
    );
    let run = || {
        let mut g = Graph::new(&store);
        let fv = g.constant(tensor(&[1, 1, 4], f.clone()));
        let av = g.constant(tensor(&[1, 1, 4], a.clone()));
        let y = block.forward(&mut g, fv, av);
        values(&g, y)
    };
    let got = run();
    assert_close(&got, &want, 1e-10);
    assert_eq!(got, run());
}

pub fn regress_and_score_heads() {
    let model = head_model(3);
    let head = &model.head;
    let mut r = rng(7);
    let decoded: Vec<Vec<f64>> = (0..3).map(|_| uniform_data(&mut r, 4, 1.0)).collect();
    let mut g = Graph::new(&model.params);
    let d = g.constant(tensor(&[1, 3, 4], decoded.concat()));
    let traj = head.regress_trajectories(&mut g, d);
    assert_eq!(g.shape(traj), &[1, 3, 12, 2]);
    let want: Vec<f64> = decoded.iter().flat_map(|f| linear(&model.params, &head.regress, f)).collect();
    assert_close(&values(&g, traj), &want, TOL);
    let (logits, p) = head.score_modalities(&mut g, d);
    let want_logits: Vec<f64> = decoded.iter().map(|f| linear(&model.params, &head.score, f)[0]).collect();
    assert_close(&values(&g, logits), &want_logits, TOL);
    assert_close(&values(&g, p), &softmax(&want_logits), TOL);
}

pub fn regress_zero_and_identical_inputs() {
    let mut model = head_model(3);
    zero_biases(&mut model.params);
    let mut g = Graph::new(&model.params);
    let zero = g.constant(tensor(&[1, 3, 4], vec![0.0; 12]));
    let traj = model.head.regress_trajectories(&mut g, zero);
    assert!(g.value(traj).iter().all(|&v| v == 0.0));
    let same = g.constant(tensor(&[1, 3, 4], [0.2, -0.1, 0.7, 0.3].repeat(3)));
    let out_var = model.head.regress_trajectories(&mut g, same);
    let traj = values(&g, out_var);
    assert_eq!(traj[..24], traj[24..48]);
    let (_, p) = model.head.score_modalities(&mut g, same);
    assert!(g.value(p).iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
}

pub fn score_argmax_survives_weight_scaling() {
    let mut model = head_model(5);
    let mut r = rng(12);
    let decoded = tensor(&[1, 5, 4], uniform_data(&mut r, 20, 1.0));
    let argmax = |model: &Model| {
        let mut g = Graph::new(&model.params);
        let d = g.constant(decoded.clone());
        let (_, p) = model.head.score_modalities(&mut g, d);
        let v = values(&g, p);
        (v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0, v)
    };
    let (before, pb) = argmax(&model);
    let Linear { weight, bias, .. } = model.head.score.clone();
    *model.params.value_mut(weight) *= 3.0;
    *model.params.value_mut(bias.unwrap()) *= 3.0;
    let (after, pa) = argmax(&model);
    assert_eq!(before, after);
    assert_ne!(pa, pb);
}

pub fn end_to_end_shapes() {
    let model = Model::new(toy_config(), 1).unwrap();
    let w1 = line_window(1, [0.4, 0.0], &[[1.0, 0.0]], 8, 12);
    let w2 = line_window(2, [0.0, -0.3], &[], 8, 12);
    let batch = Batch::from_windows(&[&w1, &w2]).unwrap();
    let mut g = Graph::new(&model.params);
    let out = model.forward(&mut g, &batch).unwrap();
    assert_eq!(g.shape(out.temporal.tokens), &[2, 6, 8]);
    assert_eq!(g.shape(out.social.features), &[3, 8]);
    assert_eq!(g.shape(out.head.trajectories), &[2, 2, 12, 2]);
    assert_eq!(g.shape(out.head.probabilities), &[2, 2]);
}

harness! {
    patch_embed_two_windows,
    patch_embed_zero_history_zero_bias,
    short_history_is_rejected,
    gated_fuse_one_token,
    gated_fuse_zero_gate_and_equal_inputs,
    attention_two_tokens_one_head,
    encoder_layer_matches_post_norm_recipe,
    transformer_is_deterministic_and_shape_preserving,
    gru_three_tokens_unrolled,
    gru_single_token_and_zero_fixed_point,
    edge_mlp_matches_manual,
    edge_mlp_zero_input_and_equal_geometry,
    node_embedding_matches_manual_and_bounds,
    gnn_three_neighbors_matches_manual,
    gnn_attention_normalization_cases,
    projection_two_modalities,
    projection_zero_input_zero_bias,
    align_shared_prelu,
    modulation_three_modalities,
    modulation_symmetric_singleton_and_literal,
    decode_block_one_modality,
    regress_and_score_heads,
    regress_zero_and_identical_inputs,
    score_argmax_survives_weight_scaling,
    end_to_end_shapes,
}
