//! Parses a small map-reduce program, prints its normalized form, runs it
//! on the interpreter and on the compiled fabric mapping.
//!
//! cargo run --example custom_program

use std::collections::BTreeMap;

use inswitch::compiler::{compile, estimate};
use inswitch::fabric::{execute, CostModel, FabricConfig};
use inswitch::fixpoint::{quantize, FixedFormat};
use inswitch::frontend::{interpret, load_program, pretty};

const SRC: &str = "
program score {
  input x : fix8[8];
  weight w : fix8[8] = load(\"score_w.csv\");
  output s : fix8[1];
  s = Map(1) { o => lut(sigmoid, Reduce(Map(8) { i => w[i] * x[i] }) { (a, b) => a + b }) }
}";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tp = load_program(SRC)?;
    print!("{}", pretty(&tp.program));
    let f = FixedFormat::FIX8;
    let x: BTreeMap<_, _> = [("x".to_string(), (0..8).map(|k| quantize(k as f64 * 0.25 - 1.0, f)).collect())].into();
    let w: BTreeMap<_, _> = [("w".to_string(), (0..8).map(|k| quantize(0.5 - k as f64 * 0.125, f)).collect())].into();
    let m = compile(&tp, &FabricConfig::default(), None)?;
    println!("interpreter: {:?}", interpret(&tp, &x, &w)?["s"][0].to_f64());
    println!("fabric:      {:?}", execute(&m, &x, &w)?["s"][0].to_f64());
    let r = estimate(&m, &CostModel::default())?;
    println!("{} ns, {:.2} mm2", r.latency_ns, r.area_mm2);
    Ok(())
}
