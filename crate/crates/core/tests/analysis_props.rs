use proptest::prelude::*;
use inswitch::analysis::*;
use inswitch::fabric::{CostModel, FabricConfig};
use inswitch::models::build_suite;

fn fm(seed: u64, fields: usize, bits: u32) -> FlowModel {
    FlowModel { n_flows: 300, unstable_fields: fields, field_entropy_bits: bits, rng_seed: seed, ..FlowModel::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn miss_rate_monotone_in_fields_and_entropy(seed in any::<u64>(), bits in 0u32..=12) {
        let mut prev = 0.0;
        for f in 0..=5 {
            let r = cache_miss_rate(&fm(seed, f, bits)).unwrap();
            prop_assert!(r >= prev, "fields {}: {} < {}", f, r, prev);
            prop_assert!((0.0..=1.0).contains(&r));
            prev = r;
        }
        let mut prev = 0.0;
        for b in 0..=12 {
            let r = cache_miss_rate(&fm(seed, 2, b)).unwrap();
            prop_assert!(r >= prev, "bits {}: {} < {}", b, r, prev);
            prev = r;
        }
    }

    #[test]
    fn dataplane_ignores_unstable_fields(seed in any::<u64>(), fields in 0usize..8, bits in 0u32..20) {
        let lc = LatencyConstants::default();
        let a = fct_compare(&fm(seed, 0, 0), &lc, Scheme::Dataplane).unwrap();
        let b = fct_compare(&fm(seed, fields, bits), &lc, Scheme::Dataplane).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn analyses_are_deterministic() {
    let m = fm(3, 4, 6);
    assert_eq!(cache_miss_rate(&m).unwrap(), cache_miss_rate(&m).unwrap());
    let lc = LatencyConstants::default();
    assert_eq!(fct_compare(&m, &lc, Scheme::Caching).unwrap(), fct_compare(&m, &lc, Scheme::Caching).unwrap());
}

#[test]
fn one_packet_flows_cost_the_same_either_way() {
    let m = FlowModel { flow_size_dist: FlowSizeDist::Fixed { packets: 1 }, ..fm(1, 8, 16) };
    let lc = LatencyConstants::default();
    assert_eq!(fct_compare(&m, &lc, Scheme::Caching).unwrap(), fct_compare(&m, &lc, Scheme::Dataplane).unwrap());
}

#[test]
fn sizes_are_heavy_tailed_and_at_least_one() {
    let sizes = FlowModel { n_flows: 20_000, ..FlowModel::default() }.flow_sizes().unwrap();
    assert!(sizes.iter().all(|&s| (1..=1_000_000).contains(&s)));
    let mice = sizes.iter().filter(|&&s| s <= 2).count();
    assert!(mice > sizes.len() / 2 && sizes.iter().any(|&s| s > 1000));
}

#[test]
fn csv_is_plot_ready() {
    let pts = cache_sweep(&fm(0, 0, 8), &[0, 1], &[8]).unwrap();
    let text = to_csv("test", &pts);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# v1"));
    assert_eq!(lines.next(), Some("x,y,series"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn empty_suite_gives_empty_report() {
    let t = report_tables(&[], &FabricConfig::default(), &CostModel::default()).unwrap();
    assert!(t.applications.is_empty() && t.micro.is_empty() && t.unroll.is_empty() && t.functional_units.is_empty());
}

#[test]
fn report_flags_deviations() {
    let mut suite: Vec<_> = build_suite().into_iter().filter(|b| b.name == "Percept" || b.name == "Conv1D").collect();
    let t = report_tables(&suite, &FabricConfig::default(), &CostModel::default()).unwrap();
    assert!(t.all_ok());
    let conv: Vec<f64> = t.unroll.iter().filter(|r| r.name == "Conv1D").map(|r| r.line_rate).collect();
    assert_eq!(conv, [0.125, 0.25, 0.5, 1.0]);
    assert_eq!(t.micro.iter().find(|r| r.name == "Percept").unwrap().report.latency_ns, 16.0);
    suite[0].targets.latency_ns *= 3.0;
    let t = report_tables(&suite, &FabricConfig::default(), &CostModel::default()).unwrap();
    assert!(!t.all_ok());
}

#[test]
fn taylor_activations_are_half_rate_and_larger() {
    let rows = inswitch::analysis::report::stage_sweep(&FabricConfig::default(), &CostModel::default(), 2..=6).unwrap();
    let at = |n: &str, s: usize| rows.iter().find(|r| r.name == n && r.stages == s).unwrap().clone();
    for s in 2..=6 {
        assert_eq!(at("SigmoidExp", s).line_rate, 0.5);
        assert_eq!(at("SigmoidLUT", s).line_rate, 1.0);
        assert!(at("SigmoidExp", s).area_mm2 > 2.0 * at("ReLU", s).area_mm2);
    }
}
