//! Compiles one benchmark onto the default fabric and prints its mapping.
//!
//! cargo run --example compile_benchmark -- [name] [unroll]

use inswitch::compiler::{compile, estimate};
use inswitch::fabric::{CostModel, FabricConfig};
use inswitch::models::benchmark;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "Conv1D".into());
    let b = benchmark(&name)?;
    let unroll = match args.next() {
        Some(u) => Some(u.parse()?),
        None => b.unroll,
    };
    let tp = b.program()?;
    let m = compile(&tp, &FabricConfig::default(), unroll)?;
    let r = estimate(&m, &CostModel::default())?;

    println!("{} (unroll {:?})", b.name, unroll);
    for (n, p) in m.graph.nodes.iter().zip(&m.plans) {
        println!(
            "  {:<12} items {:>3}  pack {:>2}  copies {:>2}  slots {:>2}  parts {}",
            n.name,
            n.items(),
            p.pack,
            p.cus,
            p.slots,
            n.parts.len()
        );
    }
    println!("latency {} cycles = {} ns (published {} ns)", r.latency_cycles, r.latency_ns, b.targets.latency_ns);
    println!("II {} -> {:.3} Gpkt/s", r.ii, r.throughput_gpkts);
    println!(
        "{} CUs, {} MUs, {} links: {:.2} mm2 (published {} mm2), {:.1} mW",
        r.cus, r.mus, r.links, r.area_mm2, b.targets.area_mm2, r.power_mw
    );
    println!("overhead on a 4-pipeline switch: area {:.2}%, power {:.2}%", r.area_overhead_pct, r.power_overhead_pct);
    Ok(())
}
