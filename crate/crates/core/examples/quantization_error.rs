//! Compares the fix8 DNN against its real-valued counterpart and the
//! propagated error bound.
//!
//! cargo run --release --example quantization_error

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use inswitch::frontend::interp::quantize_tensors;
use inswitch::frontend::{interpret, interpret_real};
use inswitch::models::{benchmark, error_bound, quantize_weights, random_inputs, shipped_weights};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tp = benchmark("DNN")?.program()?;
    let real_w = shipped_weights(&tp)?;
    let w = quantize_weights(&tp, &real_w);
    let decls: Vec<_> = tp.program.inputs.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst, mut worst_bound) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let x = random_inputs(&tp, &mut rng, 2.0);
        let fixed = interpret(&tp, &quantize_tensors(&decls, &x), &w)?;
        let real = interpret_real(&tp, &x, &real_w)?;
        let bound = error_bound(&tp, &x, &real_w)?;
        for (name, vals) in &fixed {
            for (k, v) in vals.iter().enumerate() {
                let err = (v.to_f64() - real[name][k]).abs();
                assert!(err <= bound[name][k] + 1e-12, "bound violated");
                worst = worst.max(err);
                worst_bound = worst_bound.max(bound[name][k]);
            }
        }
    }
    println!("max |fix8 - real| over 1000 inputs: {worst:.4} (largest bound {worst_bound:.4})");
    Ok(())
}
