//! Parameter and FLOP counts for the default model and a few ablations.

use trajcast::eval::complexity_report;
use trajcast::model::Model;
use trajcast::ModelConfig;

fn main() -> trajcast::Result<()> {
    let full = Model::new(ModelConfig::default(), 0)?;
    println!("{}", complexity_report(&full)?);
    for (label, cfg) in [
        ("no patch", ModelConfig { no_patch: true, ..ModelConfig::default() }),
        ("no social", ModelConfig { no_social: true, ..ModelConfig::default() }),
        ("K = 5", ModelConfig { modes: 5, ..ModelConfig::default() }),
    ] {
        let r = complexity_report(&Model::new(cfg, 0)?)?;
        println!("{label:>10}: {} parameters, {} FLOPs per agent", r.param_count, r.flops);
    }
    Ok(())
}
