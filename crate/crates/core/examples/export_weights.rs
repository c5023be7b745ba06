//! Regenerates the shipped benchmark weights from a fixed seed.
//!
//! cargo run --example export_weights [-- <dir>]

use std::path::PathBuf;

use inswitch::models::{asset_weights_dir, build_suite, random_weights, write_weights, WeightMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(asset_weights_dir);
    for b in build_suite() {
        let tp = b.program()?;
        write_weights(&dir, &tp, &random_weights(&tp, 0, WeightMode::Uniform))?;
        println!("{:<10} {} tensors", b.name, tp.program.weights.len());
    }
    println!("wrote {}", dir.display());
    Ok(())
}
