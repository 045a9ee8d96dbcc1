//! Noise-free kinematic scenes for smoke tests and generalization checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{norm, sub, Neighbor, ObservationWindow, Point};

#[derive(Clone, Debug)]
pub struct SyntheticSpec {
    pub count: usize,
    pub obs_len: usize,
    pub pred_len: usize,
    /// Per-step displacement magnitude range.
    pub speed: (f64, f64),
    /// Largest heading change per step, radians; half the agents turn.
    pub max_turn: f64,
    pub max_neighbors: usize,
    pub neighbor_radius: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            count: 1000,
            obs_len: 8,
            pred_len: 12,
            speed: (0.2, 0.6),
            max_turn: 0.08,
            max_neighbors: 3,
            neighbor_radius: 5.0,
            seed: 0,
        }
    }
}

/// Positions at steps `-(obs_len-1) ..= pred_len` of a constant-speed,
/// constant-turn-rate agent that is at `at_zero` for step 0.
fn kinematic_path(at_zero: Point, heading: f64, speed: f64, turn: f64, obs_len: usize, pred_len: usize) -> Vec<Point> {
    let first = -(obs_len as i64 - 1);
    let mut out = Vec::with_capacity(obs_len + pred_len);
    for step in first..=pred_len as i64 {
        // position relative to step 0 by summing the per-step displacements
        let mut p = at_zero;
        if step > 0 {
            for k in 1..=step {
                let h = heading + turn * k as f64;
                p = [p[0] + speed * h.cos(), p[1] + speed * h.sin()];
            }
        } else {
            for k in (step + 1..=0).rev() {
                let h = heading + turn * k as f64;
                p = [p[0] - speed * h.cos(), p[1] - speed * h.sin()];
            }
        }
        out.push(p);
    }
    out
}

pub fn generate(spec: &SyntheticSpec) -> Vec<ObservationWindow> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.count)
        .map(|i| {
            let origin = [rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)];
            let heading = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let speed = rng.random_range(spec.speed.0..=spec.speed.1);
            let turn = if rng.random::<bool>() { rng.random_range(-spec.max_turn..=spec.max_turn) } else { 0.0 };
            let path = kinematic_path(origin, heading, speed, turn, spec.obs_len, spec.pred_len);
            let here = path[spec.obs_len - 1];
            let rel: Vec<Point> = path.iter().map(|p| sub(*p, here)).collect();
            let n_nb = rng.random_range(0..=spec.max_neighbors);
            let neighbors = (0..n_nb)
                .map(|j| {
                    let r = rng.random_range(0.3..spec.neighbor_radius);
                    let a = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                    let at_zero = [r * a.cos(), r * a.sin()];
                    let h = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                    let s = rng.random_range(spec.speed.0..=spec.speed.1);
                    let hist = kinematic_path(at_zero, h, s, 0.0, spec.obs_len, 0);
                    debug_assert!(norm(hist[spec.obs_len - 1]) <= spec.neighbor_radius);
                    Neighbor { agent_id: (i * 16 + j + 1) as i64, history: hist[..spec.obs_len].to_vec() }
                })
                .collect();
            ObservationWindow {
                scene: "synthetic".into(),
                agent_id: (i * 16) as i64,
                anchor_frame: i as i64,
                origin: here,
                history: rel[..spec.obs_len].to_vec(),
                future: rel[spec.obs_len..].to_vec(),
                neighbors,
                velocity: sub(rel[spec.obs_len - 1], rel[spec.obs_len - 2]),
            }
        })
        .collect()
}
