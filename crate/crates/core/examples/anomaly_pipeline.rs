//! Runs the anomaly-detection DNN inside the switch pipeline with an ACL,
//! hysteresis and a bandwidth floor, then compares against a bypass run.
//!
//! cargo run --release --example anomaly_pipeline

use inswitch::compiler::compile;
use inswitch::datapath::{run_pipeline, synthetic_trace, AclRule, GuardConfig, KeyPattern, Model, PhvLayout, PipelineConfig};
use inswitch::fabric::FabricConfig;
use inswitch::models::{benchmark, quantize_weights, shipped_weights};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let b = benchmark("DNN")?;
    let tp = b.program()?;
    let names: Vec<String> = (0..b.arity).map(|k| format!("f{k}")).collect();
    let feats: Vec<&str> = names.iter().map(String::as_str).collect();
    let trace = synthetic_trace(5_000, 32, &feats, 0.25, 11);

    let guards = GuardConfig {
        // The shipped weights are random, so the score scale is arbitrary.
        threshold: 1.8,
        hysteresis_delta: 0.05,
        decision_timeout_pkts: 4,
        acl: vec![AclRule { fields: vec![("dst_port".into(), KeyPattern::Exact(22))] }],
        min_bandwidth_frac: 0.01,
        ..GuardConfig::default()
    };
    let model = Model {
        mapping: compile(&tp, &FabricConfig::default(), None)?,
        weights: quantize_weights(&tp, &shipped_weights(&tp)?),
        score_output: "y".into(),
        score_index: 0,
    };
    let mut cfg = PipelineConfig {
        layout: PhvLayout::with_features(&feats),
        tables: Vec::new(),
        model: Some(model),
        guards,
        base_latency_ns: 1000.0,
        service_ns: 1.0,
    };
    let with = run_pipeline(&trace, &cfg)?;
    cfg.model = None;
    let bypass = run_pipeline(&trace, &cfg)?;

    let s = &with.stats;
    println!("{} packets, {} inferred, {} rate-limited", s.packets, s.inferred, s.rate_limited);
    println!("anomalous: {} with the model, {} from the ACL alone", s.anomalous, bypass.stats.anomalous);
    println!("forced departures from the bandwidth floor: {}", s.forced_departures);
    println!(
        "mean latency {:.1} ns vs {:.1} ns bypass (+{:.1}%)",
        s.mean_latency_ns, bypass.stats.mean_latency_ns, s.added_latency_pct
    );
    Ok(())
}
