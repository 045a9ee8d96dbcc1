//! Directed interaction graph and attention-based social aggregation.
//!
//! Edges point from each neighbor `j` to the central agent `i`. Their
//! geometry is the displacement norm `|d_ij|` and the cosine between
//! `d_ij = p_i - p_j` and the central agent's pseudo-velocity, so every
//! edge feature is unchanged under rigid motions of the whole scene.

use ndarray::{ArrayD, IxDyn};

use crate::autograd::{Graph, Tensor, Var};
use crate::config::ModelConfig;
use crate::data::{norm, sub, ObservationWindow, Point};
use crate::params::{zeros, GatedFusion, Init, Linear, Mlp2, PRelu, ParamId, ParamStore};
use crate::temporal::history_tensor;

/// Below this norm the cosine term is defined as 0.
pub const DEGENERATE_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeGeometry {
    pub distance: f64,
    pub cos_theta: f64,
    /// Raw displacement `p_i - p_j`, used only by the raw-vector ablation.
    pub displacement: Point,
}

/// Polar geometry of edge `j -> i` with `i`'s pseudo-velocity as the zero angle.
pub fn edge_geometry(p_i: Point, p_j: Point, v_i: Point) -> EdgeGeometry {
    let d = sub(p_i, p_j);
    let dn = norm(d);
    let vn = norm(v_i);
    let cos_theta = if dn < DEGENERATE_EPS || vn < DEGENERATE_EPS {
        0.0
    } else {
        (d[0] * v_i[0] + d[1] * v_i[1]) / (dn * vn)
    };
    EdgeGeometry { distance: dn, cos_theta, displacement: d }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
}

/// One agent's observation as seen by the graph builder.
#[derive(Clone, Debug)]
pub struct AgentObservation {
    pub id: i64,
    /// `T'` positions in the scene frame, last entry at `t = 0`.
    pub history: Vec<Point>,
}

/// Directed interaction graph over the agents present at `t = 0`.
#[derive(Clone, Debug)]
pub struct SocialGraph {
    pub node_ids: Vec<i64>,
    /// Per-node histories, each translated so its own `t = 0` point is the origin: `[N, T', 2]`.
    pub histories: Tensor,
    pub edges: Vec<Edge>,
    pub geometry: Vec<EdgeGeometry>,
}

impl SocialGraph {
    /// Full scene graph: `j -> i` for every ordered pair within `max_dist` at `t = 0`.
    pub fn from_scene(agents: &[AgentObservation], max_dist: f64) -> Self {
        let last = |a: &AgentObservation| *a.history.last().expect("empty history");
        let vel = |a: &AgentObservation| {
            let n = a.history.len();
            sub(a.history[n - 1], a.history[n - 2])
        };
        let mut edges = Vec::new();
        let mut geometry = Vec::new();
        for (i, ai) in agents.iter().enumerate() {
            for (j, aj) in agents.iter().enumerate() {
                if i == j || norm(sub(last(ai), last(aj))) > max_dist {
                    continue;
                }
                edges.push(Edge { src: j, dst: i });
                geometry.push(edge_geometry(last(ai), last(aj), vel(ai)));
            }
        }
        let local: Vec<Vec<Point>> = agents
            .iter()
            .map(|a| {
                let o = last(a);
                a.history.iter().map(|p| sub(*p, o)).collect()
            })
            .collect();
        let refs: Vec<&[Point]> = local.iter().map(Vec::as_slice).collect();
        Self {
            node_ids: agents.iter().map(|a| a.id).collect(),
            histories: history_tensor(&refs),
            edges,
            geometry,
        }
    }

    /// Star graphs for a batch of windows. Nodes `0..B` are the primaries in
    /// window order; neighbors follow, and each neighbor has a single edge
    /// into its window's primary.
    pub fn from_windows(windows: &[&ObservationWindow]) -> Self {
        let mut node_ids: Vec<i64> = windows.iter().map(|w| w.agent_id).collect();
        let mut local: Vec<Vec<Point>> = windows.iter().map(|w| w.history.clone()).collect();
        let mut edges = Vec::new();
        let mut geometry = Vec::new();
        for (b, w) in windows.iter().enumerate() {
            let p_i = *w.history.last().expect("empty history");
            for nb in &w.neighbors {
                let p_j = *nb.history.last().expect("empty neighbor history");
                edges.push(Edge { src: node_ids.len(), dst: b });
                geometry.push(edge_geometry(p_i, p_j, w.velocity));
                node_ids.push(nb.agent_id);
                local.push(nb.history.iter().map(|p| sub(*p, p_j)).collect());
            }
        }
        let refs: Vec<&[Point]> = local.iter().map(Vec::as_slice).collect();
        Self { node_ids, histories: history_tensor(&refs), edges, geometry }
    }

    pub fn num_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn in_neighbors(&self, node: usize) -> Vec<usize> {
        self.edges.iter().filter(|e| e.dst == node).map(|e| e.src).collect()
    }

    /// Edge MLP inputs `[E, 2]` as `(|d|, cos)`, or `[E, 3]` as `(dx, dy, cos)`.
    pub fn edge_features(&self, raw_vector: bool) -> Tensor {
        let cols = if raw_vector { 3 } else { 2 };
        let mut data = Vec::with_capacity(self.edges.len() * cols);
        for g in &self.geometry {
            if raw_vector {
                data.extend_from_slice(&[g.displacement[0], g.displacement[1], g.cos_theta]);
            } else {
                data.extend_from_slice(&[g.distance, g.cos_theta]);
            }
        }
        ArrayD::from_shape_vec(IxDyn(&[self.edges.len(), cols]), data).unwrap()
    }

    /// `[N, 1]` mask: 1 where the node has at least one in-edge.
    pub fn connected_mask(&self) -> Tensor {
        let mut m = zeros(&[self.num_nodes(), 1]);
        for e in &self.edges {
            m[[e.dst, 0]] = 1.0;
        }
        m
    }
}

/// Social features for every node plus the attention weights `[E, heads]`.
#[derive(Clone, Copy, Debug)]
pub struct SocialOutput {
    pub features: Var,
    pub attention: Option<Var>,
}

#[derive(Clone, Debug)]
pub struct SocialEncoder {
    pub node_x: Linear,
    pub node_y: Linear,
    pub node_fusion: GatedFusion,
    pub edge_mlp: Mlp2,
    pub attn_logit: Linear,
    pub message: Linear,
    pub activation: PRelu,
    /// Learned feature for agents without neighbors.
    pub isolated: ParamId,
    heads: usize,
    out_dim: usize,
    leaky_slope: f64,
    raw_vector: bool,
    disabled: bool,
}

impl SocialEncoder {
    pub fn new(store: &mut ParamStore, init: &mut Init, cfg: &ModelConfig) -> Self {
        let s = cfg.social_dim;
        Self {
            node_x: Linear::new(store, init, "social.node_x", cfg.obs_len, s),
            node_y: Linear::new(store, init, "social.node_y", cfg.obs_len, s),
            node_fusion: GatedFusion::new(store, init, "social.node_fusion", s),
            edge_mlp: Mlp2::new(store, init, "social.edge", [cfg.edge_input_dim(), s, s]),
            attn_logit: Linear::new(store, init, "social.attn", 3 * s, cfg.heads),
            message: Linear::new(store, init, "social.message", s, cfg.social_out_dim),
            activation: PRelu::new(store, "social.prelu"),
            isolated: store.add("social.isolated", zeros(&[cfg.social_out_dim])),
            heads: cfg.heads,
            out_dim: cfg.social_out_dim,
            leaky_slope: cfg.leaky_slope,
            raw_vector: cfg.edge_raw_vector,
            disabled: cfg.no_social,
        }
    }

    /// Per-channel projection of the full series, gated: `[N, T', 2] -> [N, S]`.
    pub fn embed_nodes(&self, g: &mut Graph, histories: Var) -> Var {
        let (n, t) = (g.shape(histories)[0], g.shape(histories)[1]);
        let xs = g.narrow(histories, 2, 0, 1);
        let xs = g.reshape(xs, &[n, t]);
        let ys = g.narrow(histories, 2, 1, 1);
        let ys = g.reshape(ys, &[n, t]);
        let hx = self.node_x.forward(g, xs);
        let hy = self.node_y.forward(g, ys);
        self.node_fusion.forward(g, hx, hy).0
    }

    /// `[E, 2|3] -> [E, S]`.
    pub fn embed_edges(&self, g: &mut Graph, features: Var) -> Var {
        self.edge_mlp.forward(g, features)
    }

    /// Attention message passing over in-edges. Returns `([N, S'], [E, heads])`.
    pub fn aggregate(&self, g: &mut Graph, graph: &SocialGraph, nodes: Var, edges: Var) -> (Var, Option<Var>) {
        let n = graph.num_nodes();
        let iso = g.param(self.isolated);
        if graph.edges.is_empty() {
            let ones = g.constant(ArrayD::from_elem(IxDyn(&[n, 1]), 1.0));
            return (g.mul(ones, iso), None);
        }
        let e = graph.edges.len();
        let dst: Vec<usize> = graph.edges.iter().map(|e| e.dst).collect();
        let src: Vec<usize> = graph.edges.iter().map(|e| e.src).collect();
        let h_i = g.index_select(nodes, &dst);
        let h_j = g.index_select(nodes, &src);
        let cat = g.concat(&[h_i, h_j, edges], 1);
        let logits = self.attn_logit.forward(g, cat);
        let logits = g.leaky_relu(logits, self.leaky_slope);
        let alpha = g.segment_softmax(logits, &dst);

        let d = self.out_dim / self.heads;
        let msg = self.message.forward(g, nodes);
        let msg = g.index_select(msg, &src);
        let msg = g.reshape(msg, &[e, self.heads, d]);
        let weights = g.reshape(alpha, &[e, self.heads, 1]);
        let weighted = g.mul(msg, weights);
        let summed = g.scatter_add(weighted, &dst, n);
        let summed = g.reshape(summed, &[n, self.out_dim]);
        let activated = self.activation.forward(g, summed);

        let mask = g.constant(graph.connected_mask());
        let kept = g.mul(mask, activated);
        let inv = g.one_minus(mask);
        let fallback = g.mul(inv, iso);
        (g.add(kept, fallback), Some(alpha))
    }

    pub fn forward(&self, g: &mut Graph, graph: &SocialGraph) -> SocialOutput {
        let n = graph.num_nodes();
        if self.disabled {
            let iso = g.param(self.isolated);
            let ones = g.constant(ArrayD::from_elem(IxDyn(&[n, 1]), 1.0));
            return SocialOutput { features: g.mul(ones, iso), attention: None };
        }
        let hist = g.constant(graph.histories.clone());
        let nodes = self.embed_nodes(g, hist);
        let feats = g.constant(graph.edge_features(self.raw_vector));
        let edges = self.embed_edges(g, feats);
        let (features, attention) = self.aggregate(g, graph, nodes, edges);
        SocialOutput { features, attention }
    }
}
