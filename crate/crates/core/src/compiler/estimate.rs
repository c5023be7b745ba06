//! Latency, throughput, area and power estimates of a mapping.

use serde::{Deserialize, Serialize};

use super::graph::*;
use super::place::{clog2, Mapping};
use super::CompileError;
use crate::fabric::CostModel;
use crate::frontend::ast::ElemOp;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfReport {
    pub version: u32,
    pub name: String,
    pub latency_cycles: u64,
    pub latency_ns: f64,
    pub ii: usize,
    pub throughput_gpkts: f64,
    /// Fraction of one packet per clock.
    pub line_rate: f64,
    pub cus: usize,
    pub mus: usize,
    pub links: usize,
    pub area_mm2: f64,
    pub power_mw: f64,
    pub area_overhead_pct: f64,
    pub power_overhead_pct: f64,
}

impl PerfReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Cycles spent inside one part on one item.
pub fn part_cycles(m: &Mapping, n: &Node, p: &Part) -> u64 {
    let mv = m.config.movement_cycles as u64;
    let ops: u64 = n.body[p.start..p.end]
        .iter()
        .map(|i| match i.op {
            // Round trip to the attached table memory.
            ElemOp::Lut(_) => 1 + 2 * mv,
            _ => 1,
        })
        .sum();
    let red = if p.reduce { clog2(m.config.lanes) as u64 } else { 0 };
    (ops + red).max(1)
}

/// Segments from a node's last units to a consumer of `consumers` units.
fn hop(m: &Mapping, producer: usize, consumers: usize) -> u64 {
    let fan_out = 1 + clog2(consumers) as u64;
    let plan = &m.plans[producer];
    if plan.gathered {
        (clog2(plan.cus) as u64).max(1) + fan_out
    } else {
        fan_out
    }
}

/// Finish cycle of every node's last part; inputs enter at cycle 0.
pub fn node_finish(m: &Mapping) -> Vec<u64> {
    let g = &m.graph;
    let mv = m.config.movement_cycles as u64;
    let mut finish = vec![0u64; g.nodes.len()];
    for (i, n) in g.nodes.iter().enumerate() {
        let cus = m.plans[i].cus;
        let mut t = 0u64;
        for (k, p) in n.parts.iter().enumerate() {
            let mut arrive = if k > 0 { t + mv } else { 0 };
            for s in n.part_reads(k) {
                let a = match g.source(s) {
                    Source::Input(_) => mv * (1 + clog2(cus) as u64),
                    Source::Weight(_) => 0,
                    Source::Node(q) => finish[q] + mv * hop(m, q, cus),
                };
                arrive = arrive.max(a);
            }
            t = arrive + part_cycles(m, n, p);
        }
        finish[i] = t + m.plans[i].slots as u64 - 1;
    }
    finish
}

pub fn latency_cycles(m: &Mapping) -> u64 {
    let g = &m.graph;
    let mv = m.config.movement_cycles as u64;
    let finish = node_finish(m);
    g.outputs
        .iter()
        .map(|o| {
            let q = g.producer(o.tensor).expect("outputs are produced");
            let plan = &m.plans[q];
            let mut seg = if plan.gathered { (clog2(plan.cus) as u64).max(1) + 1 } else { 1 };
            if g.tensors[o.tensor].len() > 1 {
                seg += 1;
            }
            finish[q] + mv * seg + m.config.port_cycles as u64
        })
        .max()
        .unwrap_or(0)
}

pub fn estimate(m: &Mapping, cost: &CostModel) -> Result<PerfReport, CompileError> {
    let cycles = latency_cycles(m);
    let c = cost.fabric_cost(&m.config, m.cu_count(), m.mu_count(), m.links)?;
    let line_rate = 1.0 / m.ii as f64;
    Ok(PerfReport {
        version: REPORT_VERSION,
        name: m.graph.name.clone(),
        latency_cycles: cycles,
        latency_ns: cycles as f64 * m.config.cycle_ns(),
        ii: m.ii,
        throughput_gpkts: m.config.clock_ghz * line_rate,
        line_rate,
        cus: m.cu_count(),
        mus: m.mu_count(),
        links: m.links,
        area_mm2: c.area_mm2,
        power_mw: c.power_mw,
        area_overhead_pct: c.area_overhead_pct,
        power_overhead_pct: c.power_overhead_pct,
    })
}
