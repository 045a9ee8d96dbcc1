//! Render one SVG per window: history, neighbors, ground truth and every
//! predicted modality shaded by its score.

use trajcast::data::synthetic::{generate, SyntheticSpec};
use trajcast::interchange::PredictionRecord;
use trajcast::model::{Model, Predictor};
use trajcast::plot::{plot_records, PlotSelection};
use trajcast::ModelConfig;

fn main() -> trajcast::Result<()> {
    let windows = generate(&SyntheticSpec { count: 3, seed: 5, ..Default::default() });
    let model = Model::new(ModelConfig { latent_dim: 64, modes: 5, ..ModelConfig::default() }, 1)?;
    let refs: Vec<_> = windows.iter().collect();
    let predictions = Predictor::predict(&model, &refs)?;
    let records: Vec<PredictionRecord> = refs.iter().zip(&predictions).map(|(w, p)| PredictionRecord::new(w, p)).collect();
    let dir = std::env::temp_dir().join("trajcast_plots");
    for path in plot_records(&records, &PlotSelection::default(), &dir)? {
        println!("{}", path.display());
    }
    Ok(())
}
