//! Functional and cycle-level execution of a placed mapping.
//!
//! Every compute unit copy runs its assigned work items slot by slot; wide
//! reductions travel as exact partials between units, exactly as the
//! mapping distributes them.

use std::collections::{HashMap, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::compiler::estimate::latency_cycles;
use crate::compiler::graph::{Node, Operand, TensorKind};
use crate::compiler::Mapping;
use crate::fixpoint::{FixedValue, Partial};
use crate::frontend::interp::{apply_fixed, flat_index, Fixed, Tensors};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("missing tensor `{0}`")]
    Missing(String),
    #[error("tensor `{name}` has {got} values, expected {expected}")]
    Length { name: String, expected: usize, got: usize },
    #[error("memory unit over capacity: {words} words > {capacity}")]
    Capacity { words: usize, capacity: usize },
}

#[derive(Debug, Clone)]
enum Cell {
    V(FixedValue),
    P(Partial),
}

impl Cell {
    fn value(&self) -> FixedValue {
        match self {
            Cell::V(v) => *v,
            Cell::P(_) => panic!("partial read as a value"),
        }
    }
}

/// Runs one input through every unit of the mapping.
pub fn execute(m: &Mapping, inputs: &Tensors, weights: &Tensors) -> Result<Tensors, SimError> {
    let ctx = Fixed::new(m.graph.precision);
    execute_with(m, &ctx, inputs, weights)
}

fn execute_with(m: &Mapping, ctx: &Fixed, inputs: &Tensors, weights: &Tensors) -> Result<Tensors, SimError> {
    let g = &m.graph;
    for mu in &m.mus {
        if mu.words > m.config.mu_capacity {
            return Err(SimError::Capacity { words: mu.words, capacity: m.config.mu_capacity });
        }
    }
    let mut store: Vec<Vec<Cell>> = Vec::with_capacity(g.tensors.len());
    for t in &g.tensors {
        let src = match t.kind {
            TensorKind::Input => Some(inputs),
            TensorKind::Weight => Some(weights),
            _ => None,
        };
        let cells = match src {
            Some(s) => {
                let v = s.get(&t.name).ok_or_else(|| SimError::Missing(t.name.clone()))?;
                if v.len() != t.len() {
                    return Err(SimError::Length { name: t.name.clone(), expected: t.len(), got: v.len() });
                }
                v.iter().map(|x| Cell::V(x.convert(g.precision))).collect()
            }
            None => Vec::new(),
        };
        store.push(cells);
    }
    for (i, n) in g.nodes.iter().enumerate() {
        let plan = &m.plans[i];
        let out_len = g.tensors[n.out].len();
        let mut out: Vec<Option<Cell>> = vec![None; out_len];
        let cap = plan.pack * plan.slots;
        for copy in 0..plan.cus {
            for slot in 0..plan.slots {
                for seg in 0..plan.pack {
                    let t = copy * cap + slot * plan.pack + seg;
                    if t >= n.items() {
                        continue;
                    }
                    run_item(m, ctx, n, t, &store, &mut out);
                }
            }
        }
        store[n.out] = out.into_iter().map(|c| c.expect("every output element is written")).collect();
    }
    let mut result = Tensors::new();
    for o in &g.outputs {
        result.insert(o.name.clone(), store[o.tensor].iter().map(|c| c.value().convert(o.format)).collect());
    }
    Ok(result)
}

fn run_item(m: &Mapping, ctx: &Fixed, n: &Node, t: usize, store: &[Vec<Cell>], out: &mut [Option<Cell>]) {
    let g = &m.graph;
    let lanes = m.config.lanes;
    let (d, chunk) = (t / n.chunks, t % n.chunks);
    let mut vars: HashMap<&str, i64> = HashMap::new();
    let mut rest = d;
    for l in n.domain.iter().rev() {
        vars.insert(&l.var, (rest % l.trip) as i64);
        rest /= l.trip;
    }
    let lo = chunk * lanes;
    let hi = (lo + lanes).min(n.width());
    let mut acc: Option<Partial> = None;
    let mut regs: Vec<FixedValue> = Vec::with_capacity(n.body.len());
    for lane in lo..hi {
        vars.insert(&n.lane.var, lane as i64);
        regs.clear();
        let read = |o: &Operand, regs: &[FixedValue]| -> Cell {
            match o {
                Operand::Const(c) => Cell::V(FixedValue::from_raw(*c, g.precision)),
                Operand::Reg(r) => Cell::V(regs[*r]),
                Operand::Read { tensor, index } => {
                    let pos: Vec<i64> = index.iter().map(|ix| ix.eval(|v| vars[v])).collect();
                    store[*tensor][flat_index(&g.tensors[*tensor].shape, &pos)].clone()
                }
            }
        };
        for part in &n.parts {
            for ins in &n.body[part.start..part.end] {
                let args: Vec<FixedValue> = ins.args.iter().map(|a| read(a, &regs).value()).collect();
                regs.push(apply_fixed(ins.op, &args, ctx));
            }
        }
        let r = read(&n.result, &regs);
        match n.reduce {
            None => out[d * n.width() + lane] = Some(r),
            Some(op) => {
                let p = match r {
                    Cell::P(p) => p,
                    Cell::V(v) => Partial::of(op, v),
                };
                acc = Some(match acc {
                    Some(a) => a.combine(&p),
                    None => p,
                });
            }
        }
    }
    if let Some(p) = acc {
        if matches!(g.tensors[n.out].kind, TensorKind::Partial(_)) {
            out[d * n.chunks + chunk] = Some(Cell::P(p));
        } else {
            out[d] = Some(Cell::V(p.finish(g.precision).expect("non-empty lanes")));
        }
    }
}

/// Observable simulator state, for determinism checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FabricState {
    pub cycle: u64,
    pub next_accept: u64,
    /// `(ready cycle, input id)` of every input in flight.
    pub in_flight: Vec<(u64, u64)>,
}

/// Cycle-level wrapper: one input per initiation interval, each result
/// emerging after the mapping's latency.
pub struct FabricSim<'a> {
    mapping: &'a Mapping,
    weights: Tensors,
    ctx: Fixed,
    latency: u64,
    cycle: u64,
    next_accept: u64,
    next_id: u64,
    in_flight: VecDeque<(u64, u64, Tensors)>,
}

impl<'a> FabricSim<'a> {
    pub fn new(mapping: &'a Mapping, weights: Tensors) -> Self {
        FabricSim {
            mapping,
            weights,
            ctx: Fixed::new(mapping.graph.precision),
            latency: latency_cycles(mapping),
            cycle: 0,
            next_accept: 0,
            next_id: 0,
            in_flight: VecDeque::new(),
        }
    }

    pub fn latency(&self) -> u64 {
        self.latency
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn state(&self) -> FabricState {
        FabricState {
            cycle: self.cycle,
            next_accept: self.next_accept,
            in_flight: self.in_flight.iter().map(|(r, id, _)| (*r, *id)).collect(),
        }
    }

    /// Offers an input this cycle. Returns its id if accepted, `None` if the
    /// initiation interval has not elapsed.
    pub fn offer(&mut self, inputs: &Tensors) -> Result<Option<u64>, SimError> {
        if self.cycle < self.next_accept {
            return Ok(None);
        }
        let out = execute_with(self.mapping, &self.ctx, inputs, &self.weights)?;
        let id = self.next_id;
        self.next_id += 1;
        self.next_accept = self.cycle + self.mapping.ii as u64;
        self.in_flight.push_back((self.cycle + self.latency, id, out));
        Ok(Some(id))
    }

    /// Advances one clock and returns the results completing on it.
    pub fn execute_cycle(&mut self) -> Vec<(u64, Tensors)> {
        self.cycle += 1;
        let mut done = Vec::new();
        while self.in_flight.front().is_some_and(|(r, _, _)| *r <= self.cycle) {
            let (_, id, out) = self.in_flight.pop_front().expect("front");
            done.push((id, out));
        }
        done
    }

    /// Jumps the clock forward to `cycle`, returning everything completed.
    pub fn advance_to(&mut self, cycle: u64) -> Vec<(u64, Tensors)> {
        self.cycle = self.cycle.max(cycle);
        let mut done = Vec::new();
        while self.in_flight.front().is_some_and(|(r, _, _)| *r <= self.cycle) {
            let (_, id, out) = self.in_flight.pop_front().expect("front");
            done.push((id, out));
        }
        done
    }

    /// Result of an in-flight input, already determined at issue.
    pub fn peek(&self, id: u64) -> Option<&Tensors> {
        self.in_flight.iter().find(|(_, i, _)| *i == id).map(|(_, _, t)| t)
    }

    /// Feeds inputs back to back and drains. Returns `(cycle, id, outputs)`.
    pub fn run_stream(&mut self, inputs: &[Tensors]) -> Result<Vec<(u64, u64, Tensors)>, SimError> {
        let mut out = Vec::new();
        let mut pending = inputs.iter().peekable();
        while pending.peek().is_some() || !self.in_flight.is_empty() {
            if let Some(x) = pending.peek() {
                if self.offer(x)?.is_some() {
                    pending.next();
                }
            }
            for (id, o) in self.execute_cycle() {
                out.push((self.cycle, id, o));
            }
        }
        Ok(out)
    }
}
