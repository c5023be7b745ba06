//! Flow-cache miss rate as unstable header fields are added to the key.
//!
//! cargo run --release --example cache_miss

use inswitch::analysis::{cache_sweep, to_csv, FlowModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = FlowModel { n_flows: 20_000, rng_seed: 1, ..FlowModel::default() };
    let points = cache_sweep(&base, &(0..=8).collect::<Vec<_>>(), &[2, 4, 16])?;
    print!("{}", to_csv("flow-cache miss rate", &points));
    Ok(())
}
