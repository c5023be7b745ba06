//! Deterministic post-processing guards around model decisions.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::mat::KeyPattern;
use super::packet::{Phv, PhvLayout};

/// A deny rule: every listed field must match its pattern.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AclRule {
    pub fields: Vec<(String, KeyPattern)>,
}

impl AclRule {
    pub fn matches(&self, phv: &Phv, layout: &PhvLayout) -> bool {
        self.fields.iter().all(|(f, p)| phv.get(layout, f).is_some_and(|v| p.matches(v)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuardConfig {
    pub threshold: f64,
    pub hysteresis_delta: f64,
    pub decision_timeout_pkts: u32,
    pub acl: Vec<AclRule>,
    pub min_bandwidth_frac: f64,
    /// Departures per floor accounting window.
    pub window: usize,
    /// Flows with remembered guard state.
    pub lru_size: usize,
}

impl Default for GuardConfig {
    fn default() -> Self {
        GuardConfig {
            threshold: 0.5,
            hysteresis_delta: 0.0,
            decision_timeout_pkts: 0,
            acl: Vec::new(),
            min_bandwidth_frac: 0.0,
            window: 1024,
            lru_size: 4096,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Benign,
    Anomalous,
}

pub fn acl_matches(phv: &Phv, layout: &PhvLayout, g: &GuardConfig) -> bool {
    g.acl.iter().any(|r| r.matches(phv, layout))
}

/// Anomalous when either the model or the ACL flags the packet.
pub fn guard_acl(phv: &Phv, layout: &PhvLayout, score: Option<f64>, g: &GuardConfig) -> Verdict {
    let ml = score.is_some_and(|s| s > g.threshold);
    if ml || acl_matches(phv, layout, g) {
        Verdict::Anomalous
    } else {
        Verdict::Benign
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FlowGuard {
    pub decision: Option<bool>,
    /// Packets since the decision last changed.
    pub dwell: u32,
}

/// Binary decision with a timeout and a hysteresis band. The timeout is
/// applied first: within it the previous decision stands. Leaving class 1
/// needs `score <= b - delta`, leaving class 0 needs `score > b + delta`.
pub fn guard_hysteresis(state: &mut FlowGuard, score: f64, g: &GuardConfig) -> bool {
    let b = g.threshold;
    let next = match state.decision {
        None => score > b,
        Some(d) if state.dwell < g.decision_timeout_pkts => d,
        Some(true) => score > b - g.hysteresis_delta,
        Some(false) => score > b + g.hysteresis_delta,
    };
    if state.decision == Some(next) {
        state.dwell = state.dwell.saturating_add(1);
    } else {
        state.decision = Some(next);
        state.dwell = 1;
    }
    next
}

/// Per-flow guard state with least-recently-used eviction.
#[derive(Debug, Clone)]
pub struct FlowTable {
    capacity: usize,
    tick: u64,
    states: HashMap<u64, (FlowGuard, u64)>,
    order: BTreeMap<u64, u64>,
}

impl FlowTable {
    pub fn new(capacity: usize) -> Self {
        FlowTable { capacity: capacity.max(1), tick: 0, states: HashMap::new(), order: BTreeMap::new() }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn get_mut(&mut self, flow: u64) -> &mut FlowGuard {
        self.tick += 1;
        if let Some((_, t)) = self.states.get(&flow) {
            self.order.remove(t);
        } else if self.states.len() == self.capacity {
            let (_, victim) = self.order.pop_first().expect("non-empty at capacity");
            self.states.remove(&victim);
        }
        self.order.insert(self.tick, flow);
        let e = self.states.entry(flow).or_insert((FlowGuard::default(), self.tick));
        e.1 = self.tick;
        &mut e.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hysteresis_examples() {
        let g = GuardConfig { hysteresis_delta: 0.05, ..Default::default() };
        let mut s = FlowGuard::default();
        let d: Vec<bool> = [0.49, 0.51, 0.49].iter().map(|&x| guard_hysteresis(&mut s, x, &g)).collect();
        assert_eq!(d, [false, false, false]);
        assert!(guard_hysteresis(&mut s, 0.90, &g));
        let plain = GuardConfig::default();
        let mut s = FlowGuard::default();
        for x in [0.3, 0.6, 0.5, 0.51, 0.2] {
            assert_eq!(guard_hysteresis(&mut s, x, &plain), x > 0.5);
        }
    }

    #[test]
    fn timeout_holds_decision() {
        let g = GuardConfig { decision_timeout_pkts: 3, ..Default::default() };
        let mut s = FlowGuard::default();
        let d: Vec<bool> = [0.9, 0.1, 0.1, 0.1, 0.9].iter().map(|&x| guard_hysteresis(&mut s, x, &g)).collect();
        assert_eq!(d, [true, true, true, false, false]);
    }

    #[test]
    fn lru_evicts_oldest() {
        let mut t = FlowTable::new(2);
        t.get_mut(1).dwell = 5;
        t.get_mut(2);
        t.get_mut(1);
        t.get_mut(3);
        assert_eq!(t.len(), 2);
        assert_eq!(t.get_mut(1).dwell, 5);
        assert_eq!(t.get_mut(2).dwell, 0);
    }
}
