//! Writes the synthetic ART-like predictor matrix used by the simulation.
//!
//! Usage: `cargo run --example make_art -- [PATH] [SEED]`

use bayesfp::simharness::synthesize_art_predictors;

fn main() -> std::io::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "data/art_predictors.csv".into());
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(2024);
    std::fs::write(&path, synthesize_art_predictors(250, seed))?;
    eprintln!("wrote {path}");
    Ok(())
}
