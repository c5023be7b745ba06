//! Flow completion times with per-flow rule caching versus in-switch inference.
//!
//! cargo run --release --example fct_compare

use inswitch::analysis::{fct_ratio, FlowModel, LatencyConstants};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let lc = LatencyConstants::default();
    let churny = FlowModel { n_flows: 4, unstable_fields: 8, field_entropy_bits: 16, ..FlowModel::default() };
    let stable = FlowModel { unstable_fields: 0, ..churny.clone() };
    println!("packets  per-packet-features  stable-headers");
    for n in [1, 10, 100, 1_000, 10_000, 100_000] {
        println!("{n:>7}  {:>18.1}x  {:>13.2}x", fct_ratio(&churny, &lc, n)?, fct_ratio(&stable, &lc, n)?);
    }
    Ok(())
}
