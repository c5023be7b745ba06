mod common;

use common::ProgramGen;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use inswitch::compiler::{compile, estimate, CompileError, Mapping};
use inswitch::fabric::{CostModel, FabricConfig};
use inswitch::frontend::load_program;
use inswitch::models::benchmark;

fn big() -> FabricConfig {
    FabricConfig { rows: 32, cols: 32, ..Default::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn single_loop_throughput_law(n in 1usize..=32, u in 1usize..=32, k in 1usize..=16) {
        let src = format!(
            "program p {{ input x : fix8[{k}]; weight w : fix8[{n}, {k}] = load(\"w.csv\"); output y : fix8[{n}];
              y = Map({n}) {{ i => Reduce(Map({k}) {{ j => w[i, j] * x[j] }}) {{ (a, b) => a + b }} }} }}"
        );
        let tp = load_program(&src).unwrap();
        let m = compile(&tp, &big(), Some(u)).unwrap();
        prop_assert_eq!(m.ii, n.div_ceil(u));
        let full = compile(&tp, &big(), None).unwrap();
        prop_assert_eq!(full.ii, 1);
    }

    #[test]
    fn unrolling_is_monotone(seed in any::<u64>()) {
        let tp = load_program(&ProgramGen::new(ChaCha8Rng::seed_from_u64(seed)).program()).unwrap();
        let cost = CostModel::default();
        let mut last: Option<(f64, usize)> = None;
        for u in 1..=8 {
            let r = match compile(&tp, &big(), Some(u)) {
                Ok(m) => estimate(&m, &cost).unwrap(),
                Err(CompileError::Fabric(_)) => break,
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            };
            if let Some((area, ii)) = last {
                prop_assert!(r.area_mm2 >= area - 1e-9, "area fell at U={}: {} < {}", u, r.area_mm2, area);
                prop_assert!(r.ii <= ii, "II rose at U={}", u);
            }
            last = Some((r.area_mm2, r.ii));
        }
    }

    #[test]
    fn compilation_is_deterministic(seed in any::<u64>()) {
        let tp = load_program(&ProgramGen::new(ChaCha8Rng::seed_from_u64(seed)).program()).unwrap();
        let a = compile(&tp, &big(), Some(2));
        let b = compile(&tp, &big(), Some(2));
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a.to_json(), b.to_json()),
            (Err(a), Err(b)) => prop_assert_eq!(a.to_string(), b.to_string()),
            _ => prop_assert!(false, "nondeterministic outcome"),
        }
    }

    #[test]
    fn fused_map_reduce_latency_floor(k in 2usize..=64) {
        let src = format!(
            "program p {{ input x : fix8[{k}]; weight w : fix8[{k}] = load(\"w.csv\"); output y : fix8[1];
              y = Reduce(Map({k}) {{ j => w[j] * x[j] }}) {{ (a, b) => a + b }} }}"
        );
        let m = compile(&load_program(&src).unwrap(), &FabricConfig::default(), None).unwrap();
        let r = estimate(&m, &CostModel::default()).unwrap();
        prop_assert!(r.latency_cycles >= 5 + 2 * m.config.movement_cycles as u64);
    }
}

#[test]
fn mapping_json_round_trips() {
    for name in ["Conv1D", "DNN", "LSTM"] {
        let b = benchmark(name).unwrap();
        let m = compile(&b.program().unwrap(), &FabricConfig::default(), b.unroll).unwrap();
        let back = Mapping::from_json(&m.to_json()).unwrap();
        assert_eq!(back.to_json(), m.to_json());
    }
}

#[test]
fn zero_unroll_is_rejected() {
    let tp = benchmark("Conv1D").unwrap().program().unwrap();
    assert!(matches!(compile(&tp, &FabricConfig::default(), Some(0)), Err(CompileError::Unroll)));
}

#[test]
fn oversized_programs_report_grid_overflow() {
    let tp = benchmark("LSTM").unwrap().program().unwrap();
    let tiny = FabricConfig { rows: 2, cols: 2, ..Default::default() };
    assert!(matches!(compile(&tp, &tiny, Some(11)), Err(CompileError::Fabric(_))));
}
