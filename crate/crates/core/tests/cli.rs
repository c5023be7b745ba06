use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn tmp(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("inswitch-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}

fn inswitch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_inswitch")).args(args).output().unwrap()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn compile_writes_a_run_directory() {
    let out = tmp("compile");
    let o = inswitch(&["compile", "percept", "--seed", "7", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let perf = json(out.join("perf.json"));
    assert_eq!(perf["latency_ns"], 16.0);
    assert_eq!(perf["run"]["seed"], 7);
    let m = json(out.join("manifest.json"));
    assert_eq!(m["format"], "inswitch-run");
    assert_eq!(m["run"]["config"]["seed"], 7);
    let files: Vec<&str> = m["artifacts"].as_array().unwrap().iter().map(|a| a["file"].as_str().unwrap()).collect();
    assert_eq!(files, ["mapping.json", "perf.json"]);
}

#[test]
fn compile_with_unroll_sets_throughput() {
    let out = tmp("unroll");
    let asset = concat!(env!("CARGO_MANIFEST_DIR"), "/assets/v1/conv1d.mr");
    let o = inswitch(&["compile", asset, "--unroll", "4", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(out.join("perf.json"))["line_rate"], 0.5);
}

#[test]
fn exit_codes() {
    let dir = tmp("codes");
    std::fs::create_dir_all(&dir).unwrap();
    let empty = dir.join("empty.mr");
    std::fs::write(&empty, "").unwrap();
    let out = dir.join("run");
    let o = dir.to_str().unwrap();
    assert_eq!(inswitch(&["compile", empty.to_str().unwrap(), "--out", out.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(inswitch(&["compile", "no-such-program"]).status.code(), Some(1));
    assert_eq!(inswitch(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(inswitch(&["--help"]).status.code(), Some(0));
    let bad_trace = dir.join("bad.jsonl");
    std::fs::write(&bad_trace, "{\"format\":\"inswitch-trace\",\"version\":1}\n{not json}\n").unwrap();
    let code = inswitch(&["simulate", "dnn", "--trace", bad_trace.to_str().unwrap(), "--out", o]).status.code();
    assert_eq!(code, Some(3));
}

#[test]
fn simulate_is_deterministic_and_bypass_drops_inference() {
    let (a, b, c) = (tmp("sim-a"), tmp("sim-b"), tmp("sim-c"));
    for d in [&a, &b] {
        let o = inswitch(&["simulate", "dnn", "--packets", "400", "--seed", "3", "--out", d.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let log = |d: &PathBuf| std::fs::read_to_string(d.join("decisions.jsonl")).unwrap();
    let body = |s: String| s.lines().skip(1).map(str::to_string).collect::<Vec<_>>();
    assert_eq!(body(log(&a)), body(log(&b)));
    assert_eq!(body(log(&a)).len(), 400);
    let header: Value = serde_json::from_str(log(&a).lines().next().unwrap()).unwrap();
    assert_eq!(header["run"]["seed"], 3);

    let o = inswitch(&["simulate", "dnn", "--packets", "400", "--seed", "3", "--bypass", "--out", c.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let (with, without) = (json(a.join("stats.json")), json(c.join("stats.json")));
    assert_eq!(without["inference_latency_ns"], 0.0);
    assert!(with["inference_latency_ns"].as_f64().unwrap() > 0.0);
}

#[test]
fn acl_only_counts_bound_the_verdicts() {
    let dir = tmp("acl");
    std::fs::create_dir_all(&dir).unwrap();
    let acl = dir.join("acl.json");
    std::fs::write(&acl, r#"[{"fields": [["dst_port", {"exact": 443}]]}]"#).unwrap();
    let run = |extra: &[&str], name: &str| {
        let out = dir.join(name);
        let mut args = vec!["simulate", "dnn", "--packets", "300", "--acl", acl.to_str().unwrap(), "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        assert_eq!(inswitch(&args).status.code(), Some(0));
        json(out.join("stats.json"))["anomalous"].as_u64().unwrap()
    };
    let acl_only = run(&["--bypass"], "bypass");
    assert!(acl_only > 0);
    assert!(run(&[], "model") >= acl_only);
}

#[test]
fn analyze_and_report() {
    let (cache, fct, tables, rep) = (tmp("cache"), tmp("fct"), tmp("tables"), tmp("report"));
    let o = inswitch(&["analyze", "cache", "--fields", "0..3", "--entropy", "16", "--flows", "500", "--jobs", "2", "--out", cache.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(cache.join("cache.csv")).unwrap();
    assert!(csv.starts_with("# v1 run {"));
    let ys: Vec<f64> = csv.lines().skip(2).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(ys.len(), 4);
    assert!(ys.windows(2).all(|w| w[0] <= w[1]));

    let o = inswitch(&["analyze", "fct", "--lengths", "1,10000", "--out", fct.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let ratios = json(fct.join("manifest.json"))["summary"]["ratios"].clone();
    assert_eq!(ratios[0][1], 1.0);
    assert!(ratios[1][1].as_f64().unwrap() >= 1000.0);

    let o = inswitch(&["analyze", "tables", "--out", tables.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(tables.join("manifest.json"))["summary"]["all_within_tolerance"], true);

    let o = inswitch(&["report", cache.to_str().unwrap(), fct.to_str().unwrap(), "--out", rep.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let md = std::fs::read_to_string(rep.join("report.md")).unwrap();
    assert!(md.contains("analyze-cache") && md.contains("analyze-fct"));
    assert_eq!(inswitch(&["report", rep.join("missing").to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tmp("cfg");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, format!("seed = 5\nout = \"{}\"\n", dir.join("from-file").display())).unwrap();
    let o = inswitch(&["compile", "relu", "--config", cfg.to_str().unwrap(), "--seed", "9"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(dir.join("from-file").join("manifest.json"))["run"]["seed"], 9);
    std::fs::write(&cfg, "sed = 5\n").unwrap();
    assert_eq!(inswitch(&["compile", "relu", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
}
