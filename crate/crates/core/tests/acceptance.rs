//! One PASS/FAIL line per headline criterion. Run with `--nocapture` to see them.

mod common;

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use inswitch::analysis::{cache_miss_rate, fct_compare, report_tables, FlowModel, FlowSizeDist, LatencyConstants, Scheme};
use inswitch::compiler::{compile, estimate, PerfReport};
use inswitch::datapath::guard::acl_matches;
use inswitch::datapath::*;
use inswitch::fabric::{cu_area, fu_area, fu_power, CostModel, FabricConfig};
use inswitch::fixpoint::*;
use inswitch::models::{benchmark, build_suite};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn perf(name: &str, unroll: Option<usize>) -> PerfReport {
    let b = benchmark(name).unwrap();
    let m = compile(&b.program().unwrap(), &FabricConfig::default(), unroll.or(b.unroll)).unwrap();
    estimate(&m, &CostModel::default()).unwrap()
}

fn cost_model() -> Outcome {
    let want = [(FixedFormat::FIX8, 3877.0, 223.0), (FixedFormat::FIX16, 8108.0, 393.0), (FixedFormat::FIX32, 20203.0, 759.0)];
    for (p, a, w) in want {
        ensure(fu_area(p).unwrap() == a && fu_power(p).unwrap() == w, format!("{p}: FU table mismatch"))?;
    }
    let cu = cu_area(16, 2, FixedFormat::FIX8).unwrap();
    ensure(cu == 32.0 * 3877.0 * 1e-6 && (cu * 1000.0).round() == 124.0, format!("cu_area {cu}"))?;
    Ok(format!("FU tables exact, cu_area(16,2,fix8) = {cu} mm2"))
}

fn throughput() -> Outcome {
    let mut seen = Vec::new();
    for (name, sweep) in [("Conv1D", &[(1, 0.125), (2, 0.25), (4, 0.5), (8, 1.0)][..]), ("SVMLin", &[(1, 0.5), (2, 1.0)]), ("Percept", &[(1, 1.0)])] {
        for &(u, want) in sweep {
            let r = perf(name, Some(u));
            ensure(r.line_rate == want, format!("{name} U={u}: {} != {want}", r.line_rate))?;
            seen.push(format!("{name}@{u}={}", r.line_rate));
        }
    }
    Ok(seen.join(" "))
}

fn rows() -> inswitch::analysis::Tables {
    report_tables(&build_suite(), &FabricConfig::default(), &CostModel::default()).unwrap()
}

fn latency() -> Outcome {
    let t = rows();
    let p = t.micro.iter().find(|r| r.name == "Percept").unwrap();
    ensure(p.report.latency_ns == 16.0, format!("Percept {} ns", p.report.latency_ns))?;
    let mut worst = (String::new(), 0.0f64);
    for r in t.applications.iter().chain(&t.micro) {
        ensure(r.latency_dev.abs() <= 0.25, format!("{} {:.0} ns vs {} ({:+.1}%)", r.name, r.report.latency_ns, r.target_latency_ns, 100.0 * r.latency_dev))?;
        if r.latency_dev.abs() > worst.1.abs() {
            worst = (r.name.clone(), r.latency_dev);
        }
    }
    Ok(format!("Percept 16 ns exact; worst {} {:+.1}%", worst.0, 100.0 * worst.1))
}

fn area() -> Outcome {
    let t = rows();
    let p = t.micro.iter().find(|r| r.name == "Percept").unwrap();
    ensure((p.report.area_mm2 - 0.78).abs() < 5e-3, format!("Percept {} mm2", p.report.area_mm2))?;
    let mut worst = (String::new(), 0.0f64);
    for r in t.applications.iter().chain(&t.micro) {
        ensure(r.area_dev.abs() <= 0.30, format!("{} {:.2} mm2 vs {} ({:+.1}%)", r.name, r.report.area_mm2, r.target_area_mm2, 100.0 * r.area_dev))?;
        if r.area_dev.abs() > worst.1.abs() {
            worst = (r.name.clone(), r.area_dev);
        }
    }
    ensure(t.area_monotone.iter().all(|(_, ok)| *ok), "area not monotone in U")?;
    let (lat, ovh) = t.application_means().unwrap();
    Ok(format!("worst {} {:+.1}%, monotone in U; application mean {lat:.0} ns, {ovh:.1}% area", worst.0, 100.0 * worst.1))
}

fn model_rates() -> Outcome {
    let dnn = perf("DNN", None);
    ensure(dnn.ii == 1 && dnn.throughput_gpkts == 1.0, format!("DNN II {}", dnn.ii))?;
    let lstm = perf("LSTM", None);
    ensure((12..=13).contains(&lstm.ii), format!("Indigo II {}", lstm.ii))?;
    ensure((0.077..=0.0834).contains(&lstm.throughput_gpkts), format!("Indigo {} Gpkt/s", lstm.throughput_gpkts))?;
    Ok(format!("DNN {} Gpkt/s, Indigo II {} = {:.3} Gpkt/s", dnn.throughput_gpkts, lstm.ii, lstm.throughput_gpkts))
}

fn semantic() -> Outcome {
    let n = 1000;
    for seed in 0..n {
        common::semantic_case(seed).map_err(|e| format!("seed {seed}: {e}"))?;
    }
    Ok(format!("{n} random programs bit-identical"))
}

fn fixed_point() -> Outcome {
    let f = FixedFormat::FIX8;
    let all: Vec<FixedValue> = (f.min_raw()..=f.max_raw()).map(|r| FixedValue::from_raw(r, f)).collect();
    for &a in &all {
        for &b in &all {
            let (s, m) = (fx_add(a, b).unwrap(), fx_mul(a, b).unwrap());
            ensure(s == fx_add(b, a).unwrap() && m == fx_mul(b, a).unwrap(), "commutativity")?;
            ensure(s.to_f64() == quantize(a.to_f64() + b.to_f64(), f).to_f64(), "add saturation")?;
            ensure(m.to_f64() == quantize(a.to_f64() * b.to_f64(), f).to_f64(), "mul rounding")?;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..2000 {
        let mut v: Vec<FixedValue> = (0..rng.gen_range(1..64)).map(|_| FixedValue::from_raw(rng.gen_range(-128..=127), f)).collect();
        for op in [CombineOp::Add, CombineOp::Mul, CombineOp::Max, CombineOp::Min] {
            let before = reduce_vector(&v, op).unwrap();
            v.shuffle(&mut rng);
            ensure(before == reduce_vector(&v, op).unwrap(), "reduce permutation")?;
        }
    }
    let mut worst = Vec::new();
    for func in [LutFn::Sigmoid, LutFn::Tanh] {
        let (lo, hi) = func.domain();
        let lut = standard_lut(func, f);
        let bound = (hi - lo) / LUT_ENTRIES as f64 * func.max_slope() + f.ulp();
        let err = all.iter().map(|&x| (lut_eval(&lut, x).to_f64() - func.eval(x.to_f64())).abs()).fold(0.0, f64::max);
        ensure(err <= bound, format!("{} LUT error {err} > {bound}", func.name()))?;
        worst.push(format!("{} {err:.4}<={bound:.4}", func.name()));
    }
    Ok(format!("65536 pairs exact, 2000 shuffled reduces, LUT {}", worst.join(", ")))
}

fn cache_study() -> Outcome {
    let base = FlowModel { n_flows: 210_000, field_entropy_bits: 16, rng_seed: 1, ..FlowModel::default() };
    let packets: u64 = base.flow_sizes().unwrap().iter().sum();
    ensure(packets >= 1_000_000, format!("only {packets} packets"))?;
    let r0 = cache_miss_rate(&FlowModel { unstable_fields: 0, ..base.clone() }).unwrap();
    ensure(r0 == base.n_flows as f64 / packets as f64, format!("0 fields: {r0}"))?;
    let r8 = cache_miss_rate(&FlowModel { unstable_fields: 8, ..base.clone() }).unwrap();
    ensure(r8 > 0.99, format!("8 fields: {r8}"))?;
    for seed in 0..5 {
        let fm = |f, b| FlowModel { n_flows: 2000, unstable_fields: f, field_entropy_bits: b, rng_seed: seed, ..FlowModel::default() };
        let by_fields: Vec<f64> = (0..=8).map(|f| cache_miss_rate(&fm(f, 4)).unwrap()).collect();
        let by_bits: Vec<f64> = (0..=16).map(|b| cache_miss_rate(&fm(2, b)).unwrap()).collect();
        ensure(by_fields.windows(2).all(|w| w[0] <= w[1]), format!("seed {seed}: not monotone in fields"))?;
        ensure(by_bits.windows(2).all(|w| w[0] <= w[1]), format!("seed {seed}: not monotone in entropy"))?;
    }
    Ok(format!("{packets} packets: 0 fields {r0:.4} = flows/packets, 8 fields {r8:.4}, monotone over 5 paired seeds"))
}

fn fct_study() -> Outcome {
    let lc = LatencyConstants { dataplane_infer_ns: perf("DNN", None).latency_ns, ..LatencyConstants::default() };
    let mut out = Vec::new();
    for n in [1u64, 10_000, 100_000] {
        let fm = FlowModel { flow_size_dist: FlowSizeDist::Fixed { packets: n }, n_flows: 4, unstable_fields: 8, field_entropy_bits: 16, ..FlowModel::default() };
        let c = fct_compare(&fm, &lc, Scheme::Caching).unwrap();
        let d = fct_compare(&fm, &lc, Scheme::Dataplane).unwrap();
        let ratio = c.iter().zip(&d).map(|(a, b)| a.fct_ms / b.fct_ms).fold(f64::INFINITY, f64::min);
        if n == 1 {
            ensure(ratio == 1.0, format!("1-packet ratio {ratio}"))?;
        } else {
            ensure(ratio >= 1000.0, format!("{n}-packet ratio {ratio:.0}"))?;
        }
        out.push(format!("{n}:{ratio:.0}x"));
    }
    Ok(format!("caching/data-plane FCT {}", out.join(" ")))
}

fn guards() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..500 {
        let (b, d) = (rng.gen_range(0.2..0.8), rng.gen_range(0.01..0.2));
        let g = GuardConfig { threshold: b, hysteresis_delta: d, decision_timeout_pkts: rng.gen_range(0..4), ..GuardConfig::default() };
        let mut st = FlowGuard::default();
        let first = guard_hysteresis(&mut st, rng.gen_range(b - d + 1e-9..b + d), &g);
        for k in 0..100 {
            // Oscillate across the boundary while staying inside the band.
            let x = if k % 2 == 0 { rng.gen_range(b - d + 1e-9..b) } else { rng.gen_range(b..b + d) };
            ensure(guard_hysteresis(&mut st, x, &g) == first, "hysteresis chattered")?;
        }
    }
    let layout = PhvLayout::with_features(&[]);
    let trace = synthetic_trace(2000, 50, &[], 1.0, 5);
    let rule = |lo: i64| AclRule { fields: vec![("src_port".into(), KeyPattern::Range { lo, hi: lo + 2000 })] };
    let mut g = GuardConfig::default();
    let mut flagged = vec![false; trace.len()];
    for step in 0..10 {
        g.acl.push(rule(1024 + step * 6000));
        for (k, p) in trace.iter().enumerate() {
            let phv = parse(p, &layout).unwrap();
            let score = Some((k % 7) as f64 / 7.0);
            let v = guard_acl(&phv, &layout, score, &g) == Verdict::Anomalous;
            ensure(!flagged[k] || v, "ACL addition cleared a flag")?;
            ensure(!acl_matches(&phv, &layout, &g) || v, "ACL match not flagged")?;
            flagged[k] = v;
        }
    }
    let mut q = PifoQueue::default();
    let mut oracle: Vec<(i64, u64)> = Vec::new();
    let (mut seq, mut pushed) = (0u64, 0);
    while pushed < 100_000 || !oracle.is_empty() {
        if pushed < 100_000 && (oracle.is_empty() || rng.gen_bool(0.55)) {
            let r = rng.gen_range(0..100);
            q.push(r, seq);
            let at = oracle.partition_point(|e| *e <= (r, seq));
            oracle.insert(at, (r, seq));
            seq += 1;
            pushed += 1;
        } else {
            ensure(q.pop() == Some(oracle.remove(0)), "PIFO order differs from the sorted oracle")?;
        }
    }
    let mut windows = 0;
    for trial in 0..50 {
        let flows = rng.gen_range(2..8u64);
        let frac = rng.gen_range(0.01..1.0 / flows as f64);
        let window = rng.gen_range(20..200);
        let quota = (frac * window as f64).floor() as usize;
        let mut s = Scheduler::new(frac, window).unwrap();
        let mut queued: HashMap<u64, usize> = HashMap::new();
        let (mut got, mut steady, mut slot): (HashMap<u64, usize>, Vec<u64>, usize) = (HashMap::new(), Vec::new(), 0);
        for _ in 0..5000 {
            let f = rng.gen_range(0..flows);
            s.push(f, rng.gen_range(-100..100) + 50 * f as i64, ()).unwrap();
            *queued.entry(f).or_default() += 1;
            if rng.gen_bool(0.5) {
                continue;
            }
            if slot == 0 {
                got.clear();
                steady = queued.iter().filter(|(_, n)| **n > 0).map(|(f, _)| *f).collect();
            }
            let d = s.pop().unwrap();
            *got.entry(d.flow).or_default() += 1;
            let n = queued.get_mut(&d.flow).unwrap();
            *n -= 1;
            if *n == 0 {
                steady.retain(|x| *x != d.flow);
            }
            slot += 1;
            if slot == window {
                for f in &steady {
                    ensure(got.get(f).copied().unwrap_or(0) >= quota, format!("trial {trial}: flow {f} below floor"))?;
                }
                windows += 1;
                slot = 0;
            }
        }
    }
    Ok(format!("no chatter in 500 runs, ACL monotone over 10 additions, PIFO = oracle on 1e5 enqueues, floors held in {windows} windows"))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("cost-model exactness", cost_model),
        ("throughput law", throughput),
        ("latency calibration and prediction", latency),
        ("area prediction", area),
        ("model-rate targets", model_rates),
        ("semantic preservation", semantic),
        ("fixed-point properties", fixed_point),
        ("cache-miss study", cache_study),
        ("FCT study", fct_study),
        ("guard properties", guards),
    ];
    let mut failed = Vec::new();
    for (k, (name, f)) in criteria.iter().enumerate() {
        let t = std::time::Instant::now();
        let r = f();
        let secs = t.elapsed().as_secs_f64();
        match &r {
            Ok(detail) => println!("PASS [{}] {name}: {detail} ({secs:.1}s)", k + 1),
            Err(why) => {
                println!("FAIL [{}] {name}: {why} ({secs:.1}s)", k + 1);
                failed.push(*name);
            }
        }
    }
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
