//! End-to-end replay of a trace through the modified switch pipeline.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::guard::{acl_matches, guard_hysteresis, FlowTable, GuardConfig, Verdict};
use super::mat::{mat_apply, MatTable};
use super::packet::{parse, PacketRecord, Phv, PhvLayout};
use super::pifo::Scheduler;
use super::DatapathError;
use crate::compiler::graph::TensorKind;
use crate::compiler::Mapping;
use crate::fabric::FabricSim;
use crate::fixpoint::FixedValue;
use crate::frontend::Tensors;

pub const DECISION_FORMAT: &str = "inswitch-decisions";
pub const DECISION_VERSION: u32 = 1;

/// A compiled model and the output element used as its score.
#[derive(Debug, Clone)]
pub struct Model {
    pub mapping: Mapping,
    pub weights: Tensors,
    pub score_output: String,
    pub score_index: usize,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub layout: PhvLayout,
    pub tables: Vec<MatTable>,
    pub model: Option<Model>,
    pub guards: GuardConfig,
    /// Latency of the switch without inference.
    pub base_latency_ns: f64,
    /// Egress link time per packet.
    pub service_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub index: usize,
    pub verdict: Verdict,
    pub rank: i64,
    pub latency_ns: f64,
    pub score: Option<f64>,
    /// Arrived before the fabric could accept another input.
    pub rate_limited: bool,
    pub departure_ns: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub packets: usize,
    pub inferred: usize,
    pub rate_limited: usize,
    pub anomalous: usize,
    pub benign: usize,
    pub forced_departures: usize,
    pub mean_latency_ns: f64,
    pub inference_latency_ns: f64,
    /// Inference latency relative to the bypass pipeline.
    pub added_latency_pct: f64,
    pub mean_queue_ns: f64,
    pub stage_ns: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub decisions: Vec<Decision>,
    pub stats: Stats,
}

impl PipelineResult {
    pub fn write_log(&self, w: &mut impl Write, run: Option<&serde_json::Value>) -> std::io::Result<()> {
        let mut h = serde_json::json!({ "format": DECISION_FORMAT, "version": DECISION_VERSION });
        if let Some(r) = run {
            h["run"] = r.clone();
        }
        writeln!(w, "{h}")?;
        for d in &self.decisions {
            writeln!(w, "{}", serde_json::to_string(d).expect("decision serializes"))?;
        }
        Ok(())
    }
}

/// Splits the feature slice across the model's inputs, raw words saturated
/// into each input's format.
pub fn model_inputs(m: &Mapping, features: &[i64]) -> Result<Tensors, DatapathError> {
    let ins: Vec<_> = m.graph.tensors.iter().filter(|t| t.kind == TensorKind::Input).collect();
    let expected: usize = ins.iter().map(|t| t.len()).sum();
    if expected != features.len() {
        return Err(DatapathError::Arity { expected, got: features.len() });
    }
    let mut out = Tensors::new();
    let mut at = 0;
    for t in ins {
        let vals = features[at..at + t.len()].iter().map(|&v| FixedValue::from_raw(v, t.format)).collect();
        at += t.len();
        out.insert(t.name.clone(), vals);
    }
    Ok(out)
}

/// Issues the packet's features to the fabric at `cycle`. `None` when the
/// fabric is still busy with an earlier input.
pub fn infer(phv: &Phv, layout: &PhvLayout, sim: &mut FabricSim, m: &Mapping, cycle: u64) -> Result<Option<Tensors>, DatapathError> {
    let inputs = model_inputs(m, &phv.feature_slice(layout))?;
    sim.advance_to(cycle);
    Ok(match sim.offer(&inputs)? {
        Some(id) => sim.peek(id).cloned(),
        None => None,
    })
}

pub fn run_pipeline(trace: &[PacketRecord], cfg: &PipelineConfig) -> Result<PipelineResult, DatapathError> {
    let mut sim = cfg.model.as_ref().map(|m| FabricSim::new(&m.mapping, m.weights.clone()));
    let infer_ns = match (&cfg.model, &sim) {
        (Some(m), Some(s)) => s.latency() as f64 * m.mapping.config.cycle_ns(),
        _ => 0.0,
    };
    let mut flows = FlowTable::new(cfg.guards.lru_size);
    let mut sched = Scheduler::new(cfg.guards.min_bandwidth_frac, cfg.guards.window)?;
    let mut decisions: Vec<Decision> = Vec::with_capacity(trace.len());
    let mut link_free = 0.0f64;
    let mut stats = Stats::default();
    let drain = |upto: f64, sched: &mut Scheduler<usize>, decisions: &mut Vec<Decision>, link_free: &mut f64, forced: &mut usize| {
        while !sched.is_empty() {
            // The head is ready once every queued packet has cleared processing.
            let start = link_free.max(0.0);
            if start > upto {
                break;
            }
            let d = sched.pop().expect("non-empty");
            let ready = decisions[d.item].departure_ns;
            let t = start.max(ready);
            decisions[d.item].departure_ns = t + cfg.service_ns;
            *link_free = t + cfg.service_ns;
            *forced += d.forced as usize;
        }
    };
    for (index, p) in trace.iter().enumerate() {
        let mut phv = parse(p, &cfg.layout)?;
        for t in &cfg.tables {
            phv = mat_apply(t, &phv, &cfg.layout)?;
        }
        let (mut score, mut rate_limited) = (None, false);
        if let (Some(m), Some(s)) = (&cfg.model, sim.as_mut()) {
            let cycle = (p.arrival_ns as f64 * m.mapping.config.clock_ghz).round() as u64;
            match infer(&phv, &cfg.layout, s, &m.mapping, cycle)? {
                Some(out) => {
                    let v = out.get(&m.score_output).ok_or_else(|| DatapathError::Output(m.score_output.clone()))?;
                    score = Some(v.get(m.score_index).ok_or_else(|| DatapathError::Output(m.score_output.clone()))?.to_f64());
                }
                None => rate_limited = true,
            }
        }
        let flagged = match score {
            Some(x) => guard_hysteresis(flows.get_mut(phv.flow_id), x, &cfg.guards),
            None => false,
        };
        let verdict = if flagged || acl_matches(&phv, &cfg.layout, &cfg.guards) { Verdict::Anomalous } else { Verdict::Benign };
        let rank = (score.unwrap_or(0.0) * 1024.0).round() as i64 + if verdict == Verdict::Anomalous { 1 << 20 } else { 0 };
        let latency_ns = cfg.base_latency_ns + if score.is_some() { infer_ns } else { 0.0 };
        let arrival = p.arrival_ns as f64;
        drain(arrival, &mut sched, &mut decisions, &mut link_free, &mut stats.forced_departures);
        decisions.push(Decision {
            index,
            verdict,
            rank,
            latency_ns,
            score,
            rate_limited,
            departure_ns: arrival + latency_ns,
        });
        sched.push(phv.flow_id, rank, index)?;
    }
    drain(f64::INFINITY, &mut sched, &mut decisions, &mut link_free, &mut stats.forced_departures);
    let n = decisions.len();
    stats.packets = n;
    stats.inferred = decisions.iter().filter(|d| d.score.is_some()).count();
    stats.rate_limited = decisions.iter().filter(|d| d.rate_limited).count();
    stats.anomalous = decisions.iter().filter(|d| d.verdict == Verdict::Anomalous).count();
    stats.benign = n - stats.anomalous;
    if n > 0 {
        stats.mean_latency_ns = decisions.iter().map(|d| d.latency_ns).sum::<f64>() / n as f64;
        stats.mean_queue_ns = decisions
            .iter()
            .zip(trace)
            .map(|(d, p)| d.departure_ns - cfg.service_ns - d.latency_ns - p.arrival_ns as f64)
            .sum::<f64>()
            / n as f64;
        stats.inference_latency_ns = infer_ns;
        stats.added_latency_pct = 100.0 * infer_ns / cfg.base_latency_ns;
        stats.stage_ns.insert("switch".into(), cfg.base_latency_ns);
        stats.stage_ns.insert("inference".into(), infer_ns);
    }
    Ok(PipelineResult { decisions, stats })
}
