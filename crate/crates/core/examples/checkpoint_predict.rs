//! Train briefly, save a checkpoint, reload it and write predictions in the
//! JSON-lines interchange format, then score the file.

use std::fs::File;
use std::io::BufWriter;

use trajcast::data::synthetic::{generate, SyntheticSpec};
use trajcast::interchange::{evaluate_records, read_predictions, write_predictions, PredictionRecord};
use trajcast::model::Predictor;
use trajcast::train::{Checkpoint, TrainConfig, Trainer};
use trajcast::ModelConfig;

fn main() -> trajcast::Result<()> {
    let dir = std::env::temp_dir().join("trajcast_checkpoint_example");
    std::fs::create_dir_all(&dir)?;
    let windows = generate(&SyntheticSpec { count: 200, seed: 9, ..Default::default() });
    let model = ModelConfig { temporal_dim: 16, social_dim: 16, social_out_dim: 16, latent_dim: 32, modes: 6, ..ModelConfig::default() };
    let mut trainer = Trainer::new(TrainConfig { model, epochs: 2, ..TrainConfig::ethucy() })?;
    trainer.run(&windows, &[], None, |_, _| Ok(()))?;

    let path = dir.join("final.ckpt");
    trainer.checkpoint().save(&path)?;
    let ckpt = Checkpoint::load(&path)?;
    println!("loaded {} (epoch {}, config {})", path.display(), ckpt.epoch, &ckpt.config_hash[..12]);
    let model = ckpt.model()?;

    let refs: Vec<_> = windows.iter().take(20).collect();
    let predictions = Predictor::predict(&model, &refs)?;
    let records: Vec<PredictionRecord> = refs.iter().zip(&predictions).map(|(w, p)| PredictionRecord::new(w, p)).collect();
    let out = dir.join("predictions.jsonl");
    write_predictions(BufWriter::new(File::create(&out)?), &records)?;
    let report = evaluate_records(&read_predictions(&out)?, false)?;
    println!("{} records -> ADE {:.3} FDE {:.3}", records.len(), report.average_ade, report.average_fde);
    Ok(())
}
