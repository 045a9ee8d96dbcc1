//! Build an interaction graph for a small scene and show edge geometry and
//! the attention each agent pays to its neighbors.

use trajcast::autograd::Graph;
use trajcast::model::Model;
use trajcast::social::{AgentObservation, SocialGraph};
use trajcast::ModelConfig;

fn walker(id: i64, start: [f64; 2], step: [f64; 2]) -> AgentObservation {
    let history = (0..8).map(|t| [start[0] + step[0] * t as f64, start[1] + step[1] * t as f64]).collect();
    AgentObservation { id, history }
}

fn main() -> trajcast::Result<()> {
    let agents = vec![
        walker(1, [0.0, 0.0], [0.4, 0.0]),
        walker(2, [3.0, 1.0], [-0.4, 0.0]),
        walker(3, [1.0, -2.0], [0.0, 0.3]),
        walker(4, [30.0, 30.0], [0.1, 0.1]),
    ];
    let graph = SocialGraph::from_scene(&agents, 10.0);
    println!("{} nodes, {} edges", graph.num_nodes(), graph.edges.len());
    for (e, geo) in graph.edges.iter().zip(&graph.geometry) {
        println!(
            "  {} -> {}  distance {:.2}  cos {:+.2}",
            graph.node_ids[e.src], graph.node_ids[e.dst], geo.distance, geo.cos_theta
        );
    }

    let cfg = ModelConfig { social_dim: 16, social_out_dim: 16, heads: 2, ..ModelConfig::default() };
    let model = Model::new(cfg, 0)?;
    let mut g = Graph::new(&model.params);
    let out = model.social.forward(&mut g, &graph);
    if let Some(alpha) = out.attention {
        let alpha = g.value(alpha);
        for (i, e) in graph.edges.iter().enumerate() {
            println!("  alpha {} -> {}: head0 {:.3} head1 {:.3}", graph.node_ids[e.src], graph.node_ids[e.dst], alpha[[i, 0]], alpha[[i, 1]]);
        }
    }
    println!("agent 4 has no neighbors and receives the learned isolated vector");
    println!("social feature shape {:?}", g.shape(out.features));
    Ok(())
}
