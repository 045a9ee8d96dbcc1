//! Best-of-K ADE/FDE of the kinematic baselines on synthetic scenes.

use trajcast::data::synthetic::{generate, SyntheticSpec};
use trajcast::eval::evaluate;
use trajcast::model::{ConstantVelocity, Stationary};

fn main() -> trajcast::Result<()> {
    for (label, turn) in [("straight", 0.0), ("turning", 0.08)] {
        let windows = generate(&SyntheticSpec { count: 500, max_turn: turn, seed: 4, ..Default::default() });
        let cv = evaluate(&ConstantVelocity, &windows, false)?;
        let st = evaluate(&Stationary, &windows, false)?;
        println!("{label:>8}  constant velocity ADE {:.4} FDE {:.4}   stationary ADE {:.4} FDE {:.4}",
            cv.average_ade, cv.average_fde, st.average_ade, st.average_fde);
    }
    Ok(())
}
