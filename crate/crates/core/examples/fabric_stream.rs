//! Streams back-to-back inputs through the cycle-level fabric model and
//! checks every output against the interpreter.
//!
//! cargo run --example fabric_stream

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use inswitch::compiler::compile;
use inswitch::fabric::{FabricConfig, FabricSim};
use inswitch::frontend::interp::quantize_tensors;
use inswitch::frontend::interpret;
use inswitch::models::{benchmark, quantize_weights, random_inputs, shipped_weights};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let b = benchmark("Conv1D")?;
    let tp = b.program()?;
    let w = quantize_weights(&tp, &shipped_weights(&tp)?);
    let decls: Vec<_> = tp.program.inputs.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let xs: Vec<_> = (0..6).map(|_| quantize_tensors(&decls, &random_inputs(&tp, &mut rng, 2.0))).collect();

    for u in [1, 2, 8] {
        let m = compile(&tp, &FabricConfig::default(), Some(u))?;
        let mut sim = FabricSim::new(&m, w.clone());
        let out = sim.run_stream(&xs)?;
        let cycles: Vec<u64> = out.iter().map(|o| o.0).collect();
        let exact = out.iter().all(|(_, id, o)| *o == interpret(&tp, &xs[*id as usize], &w).unwrap());
        println!("U={u}: II {} latency {} ready at cycles {cycles:?}, matches interpreter: {exact}", m.ii, sim.latency());
    }
    Ok(())
}
