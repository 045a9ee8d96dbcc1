//! Parse ETH-format annotations, cut observation windows and split them
//! leave-one-out.
//!
//! Usage: `cargo run --example build_windows [DATA_DIR]`. Without a directory a
//! small generated scene is used.

use std::fmt::Write as _;

use trajcast::data::{build_windows, leave_one_out_split, load_ethucy, parse_ethucy, WindowParams};

fn generated_scene() -> String {
    let mut text = String::new();
    for frame in 0..30 {
        for agent in 1..=4 {
            // agents enter at staggered frames
            if frame < agent * 2 {
                continue;
            }
            let x = 0.35 * frame as f64;
            let y = agent as f64 * 1.2;
            writeln!(text, "{}\t{agent}\t{x:.3}\t{y:.3}", frame * 10).unwrap();
        }
    }
    text
}

fn main() -> trajcast::Result<()> {
    let params = WindowParams::ethucy();
    if let Some(dir) = std::env::args().nth(1) {
        let data = load_ethucy(dir.as_ref(), &params)?;
        for (scene, windows) in &data.scenes {
            println!("{scene:>6}: {} windows", windows.len());
        }
        let (train, test) = leave_one_out_split(&data.scenes, "hotel")?;
        println!("holdout hotel: {} train / {} test windows", train.len(), test.len());
        return Ok(());
    }

    let tracks = parse_ethucy(&generated_scene())?;
    println!("{} tracks", tracks.len());
    let windows = build_windows("demo", &tracks, &params);
    for w in &windows {
        println!(
            "agent {} anchor {:>3}  origin ({:.2}, {:.2})  {} neighbors  velocity ({:.2}, {:.2})",
            w.agent_id,
            w.anchor_frame,
            w.origin[0],
            w.origin[1],
            w.neighbors.len(),
            w.velocity[0],
            w.velocity[1]
        );
    }
    Ok(())
}
