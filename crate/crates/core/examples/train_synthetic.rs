//! Train a small model on synthetic kinematic scenes and compare it with the
//! baselines. `EPOCHS` overrides the default of 20.

use trajcast::data::synthetic::{generate, SyntheticSpec};
use trajcast::eval::evaluate;
use trajcast::model::{ConstantVelocity, Stationary};
use trajcast::train::{TrainConfig, Trainer};
use trajcast::ModelConfig;

fn main() -> trajcast::Result<()> {
    let epochs = std::env::var("EPOCHS").ok().and_then(|s| s.parse().ok()).unwrap_or(20);
    let train = generate(&SyntheticSpec { count: 1000, seed: 1, ..Default::default() });
    let test = generate(&SyntheticSpec { count: 200, seed: 2, ..Default::default() });
    let model = ModelConfig {
        temporal_dim: 32,
        social_dim: 32,
        social_out_dim: 32,
        latent_dim: 64,
        dropout: 0.0,
        ..ModelConfig::default()
    };
    let cfg = TrainConfig { model, epochs, lr0: 1e-3, ..TrainConfig::ethucy() };
    let mut trainer = Trainer::new(cfg)?;
    trainer.run(&train, &[], None, |_, log| {
        println!("epoch {:>3}  lr {:.2e}  traj {:.4}  cls {:.4}", log.epoch, log.lr, log.train_loss_traj, log.train_loss_cls);
        Ok(())
    })?;
    let m = evaluate(&trainer.model, &test, false)?;
    let cv = evaluate(&ConstantVelocity, &test, false)?;
    let st = evaluate(&Stationary, &test, false)?;
    println!("model       ADE {:.4} FDE {:.4}", m.average_ade, m.average_fde);
    println!("const. vel. ADE {:.4} FDE {:.4}", cv.average_ade, cv.average_fde);
    println!("stationary  ADE {:.4} FDE {:.4}", st.average_ade, st.average_fde);
    Ok(())
}
