use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use inswitch::compiler::compile;
use inswitch::fabric::{execute, FabricConfig, FabricSim};
use inswitch::frontend::interp::quantize_tensors;
use inswitch::frontend::interpret;
use inswitch::models::{build_suite, random_inputs, random_weights, WeightMode};

#[test]
fn every_benchmark_matches_the_interpreter() {
    let cfg = FabricConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for b in build_suite() {
        let tp = b.program().unwrap();
        assert_eq!(tp.program.input_arity(), b.arity, "{}", b.name);
        let m = compile(&tp, &cfg, b.unroll).unwrap();
        let decls: Vec<_> = tp.program.weights.iter().map(|w| &w.decl).collect();
        let w = quantize_tensors(&decls, &random_weights(&tp, 1, WeightMode::Uniform));
        let in_decls: Vec<_> = tp.program.inputs.iter().collect();
        for _ in 0..50 {
            let x = quantize_tensors(&in_decls, &random_inputs(&tp, &mut rng, 2.0));
            assert_eq!(execute(&m, &x, &w).unwrap(), interpret(&tp, &x, &w).unwrap(), "{}", b.name);
        }
    }
}

#[test]
fn perceptron_stream_timing() {
    let b = inswitch::models::benchmark("Percept").unwrap();
    let tp = b.program().unwrap();
    let m = compile(&tp, &FabricConfig::default(), None).unwrap();
    let decls: Vec<_> = tp.program.weights.iter().map(|w| &w.decl).collect();
    let w = quantize_tensors(&decls, &random_weights(&tp, 0, WeightMode::Uniform));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let in_decls: Vec<_> = tp.program.inputs.iter().collect();
    let xs: Vec<_> = (0..5).map(|_| quantize_tensors(&in_decls, &random_inputs(&tp, &mut rng, 1.0))).collect();
    let mut sim = FabricSim::new(&m, w.clone());
    let out = sim.run_stream(&xs).unwrap();
    let cycles: Vec<u64> = out.iter().map(|o| o.0).collect();
    assert_eq!(cycles, vec![16, 17, 18, 19, 20]);
    for (k, (_, id, o)) in out.iter().enumerate() {
        assert_eq!(*id as usize, k);
        assert_eq!(o, &interpret(&tp, &xs[k], &w).unwrap());
    }
}
