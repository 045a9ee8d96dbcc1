//! Winner-takes-all trajectory loss and the modality classification loss.

use ndarray::{ArrayD, IxDyn};

use crate::autograd::{Graph, Tensor, Var};
use crate::data::Point;
use crate::error::{Error, Result};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before the log.
pub const PROB_CLAMP: f64 = 1e-7;

fn check_finite(pred: &[Vec<Point>], gt: &[Point]) -> Result<()> {
    let ok = |pts: &[Point]| pts.iter().all(|p| p[0].is_finite() && p[1].is_finite());
    if !ok(gt) || !pred.iter().all(|tr| ok(tr)) {
        return Err(Error::NonFinite("trajectory loss input".into()));
    }
    if pred.is_empty() || pred.iter().any(|tr| tr.len() != gt.len()) {
        return Err(Error::Shape(format!("need K >= 1 trajectories of {} steps", gt.len())));
    }
    Ok(())
}

/// Sum over steps of squared Euclidean error, one entry per modality.
pub fn per_mode_sse(pred: &[Vec<Point>], gt: &[Point]) -> Vec<f64> {
    pred.iter()
        .map(|tr| {
            tr.iter()
                .zip(gt)
                .map(|(p, q)| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2))
                .sum()
        })
        .collect()
}

/// Index of the smallest error; ties go to the lowest index.
pub fn winner(errors: &[f64]) -> usize {
    let mut best = 0;
    for (k, &e) in errors.iter().enumerate() {
        if e < errors[best] {
            best = k;
        }
    }
    best
}

/// `(1/T) min_k sum_t |p_t^k - p_t|^2`.
pub fn traj_loss(pred: &[Vec<Point>], gt: &[Point]) -> Result<f64> {
    check_finite(pred, gt)?;
    let sse = per_mode_sse(pred, gt);
    Ok(sse[winner(&sse)] / gt.len() as f64)
}

/// Mean binary cross-entropy of `probs` against a one-hot target on the
/// modality closest to `gt`.
pub fn cls_loss(probs: &[f64], pred: &[Vec<Point>], gt: &[Point]) -> Result<f64> {
    check_finite(pred, gt)?;
    if probs.len() != pred.len() {
        return Err(Error::Shape(format!("{} scores for {} modalities", probs.len(), pred.len())));
    }
    let target = winner(&per_mode_sse(pred, gt));
    Ok(bce(probs, target))
}

pub fn bce(probs: &[f64], target: usize) -> f64 {
    let k = probs.len() as f64;
    probs
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            if i == target {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / k
}

/// Loss nodes for a batch.
#[derive(Clone, Debug)]
pub struct BatchLoss {
    pub total: Var,
    pub traj: Var,
    pub cls: Var,
    pub winners: Vec<usize>,
}

/// Batch-mean losses on the tape.
///
/// `trajectories: [B, K, T, 2]`, `probabilities: [B, K]`, `future: [B, T, 2]`.
pub fn batch_loss(g: &mut Graph, trajectories: Var, probabilities: Var, future: &Tensor) -> Result<BatchLoss> {
    let (b, k, t) = {
        let s = g.shape(trajectories);
        (s[0], s[1], s[2])
    };
    if future.shape() != [b, t, 2] {
        return Err(Error::Shape(format!("ground truth {:?} vs predictions {:?}", future.shape(), [b, k, t, 2])));
    }
    if g.value(trajectories).iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("predicted trajectories".into()));
    }
    let gt = g.constant(future.clone().insert_axis(ndarray::Axis(1)));
    let diff = g.sub(trajectories, gt);
    let sq = g.square(diff);
    let sse = g.sum_axes(sq, &[2, 3]);
    let winners: Vec<usize> = {
        let v = g.value(sse);
        (0..b).map(|bi| winner(&(0..k).map(|ki| v[[bi, ki]]).collect::<Vec<_>>())).collect()
    };
    let flat = g.reshape(sse, &[b * k]);
    let picked: Vec<usize> = winners.iter().enumerate().map(|(bi, &w)| bi * k + w).collect();
    let best = g.index_select(flat, &picked);
    let mean = g.mean(best);
    let traj = g.scale(mean, 1.0 / t as f64);

    let mut onehot = ArrayD::<f64>::zeros(IxDyn(&[b, k]));
    for (bi, &w) in winners.iter().enumerate() {
        onehot[[bi, w]] = 1.0;
    }
    let y = g.constant(onehot.clone());
    let not_y = g.constant(onehot.mapv(|v| 1.0 - v));
    let p = g.clamp(probabilities, PROB_CLAMP, 1.0 - PROB_CLAMP);
    let log_p = g.ln(p);
    let q = g.one_minus(p);
    let log_q = g.ln(q);
    let pos = g.mul(y, log_p);
    let neg = g.mul(not_y, log_q);
    let ll = g.add(pos, neg);
    let m = g.mean(ll);
    let cls = g.scale(m, -1.0);
    let total = g.add(traj, cls);
    Ok(BatchLoss { total, traj, cls, winners })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(offset: Point, t: usize) -> Vec<Point> {
        (1..=t).map(|i| [i as f64 + offset[0], offset[1]]).collect()
    }

    #[test]
    fn exact_modality_gives_zero() {
        let gt = line([0.0, 0.0], 12);
        let pred = vec![line([3.0, 1.0], 12), gt.clone()];
        assert_eq!(traj_loss(&pred, &gt).unwrap(), 0.0);
    }

    #[test]
    fn unit_offset_on_both_axes() {
        let gt = line([0.0, 0.0], 12);
        let pred = vec![line([1.0, 1.0], 12)];
        assert!((traj_loss(&pred, &gt).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn nan_is_rejected() {
        let gt = line([0.0, 0.0], 3);
        let mut bad = gt.clone();
        bad[1][0] = f64::NAN;
        assert!(matches!(traj_loss(&[bad], &gt), Err(Error::NonFinite(_))));
    }

    #[test]
    fn ties_pick_lowest_index() {
        assert_eq!(winner(&[2.0, 1.0, 1.0]), 1);
        assert_eq!(winner(&[0.5, 0.5]), 0);
    }

    #[test]
    fn one_hot_probabilities_cost_nothing() {
        let gt = line([0.0, 0.0], 4);
        let pred = vec![line([2.0, 0.0], 4), gt.clone(), line([0.0, 5.0], 4)];
        let loss = cls_loss(&[0.0, 1.0, 0.0], &pred, &gt).unwrap();
        assert!(loss <= 1e-6, "{loss}");
    }
}
