//! Resource folding, greedy placement and dimension-ordered routing.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::graph::*;
use super::split::part_luts;
use super::CompileError;
use crate::fabric::FabricConfig;
use crate::fixpoint::LutFn;

pub const MAPPING_VERSION: u32 = 1;

pub type Pos = (usize, usize);

/// Physical resources of one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodePlan {
    /// Domain points packed side by side into one unit's lanes.
    pub pack: usize,
    pub cus: usize,
    /// Time slots each unit cycles through per input.
    pub slots: usize,
    /// Output collected into a memory unit rather than streamed directly.
    pub gathered: bool,
    /// Unit positions, indexed `[part][copy]`.
    pub units: Vec<Vec<Pos>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum MuRole {
    Weight(TensorId),
    Gather(TensorId),
    /// Table attached to the unit at `[node, part, copy]`.
    Lut { func: LutFn, node: usize, part: usize, copy: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuUnit {
    pub role: MuRole,
    pub pos: Pos,
    pub words: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub from: Pos,
    pub to: Pos,
    pub path: Vec<Pos>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mapping {
    pub version: u32,
    pub config: FabricConfig,
    pub graph: Graph,
    /// Cycles between accepted inputs.
    pub ii: usize,
    pub plans: Vec<NodePlan>,
    pub mus: Vec<MuUnit>,
    pub routes: Vec<Route>,
    /// Interconnect ports: one per occupied stage plus one per I/O stream.
    pub links: usize,
}

impl Mapping {
    pub fn cu_count(&self) -> usize {
        self.plans.iter().map(|p| p.units.iter().map(Vec::len).sum::<usize>()).sum()
    }

    pub fn mu_count(&self) -> usize {
        self.mus.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("mapping serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, CompileError> {
        let m: Mapping = serde_json::from_str(s).map_err(|e| CompileError::Format(e.to_string()))?;
        if m.version != MAPPING_VERSION {
            return Err(CompileError::Format(format!("unsupported mapping version {}", m.version)));
        }
        Ok(m)
    }
}

/// Depth of a binary fan-in or fan-out tree over `n` units.
pub fn clog2(n: usize) -> u32 {
    n.max(1).next_power_of_two().trailing_zeros()
}

/// Chooses packing, unit counts and slots for every node.
pub fn fold(g: &Graph, cfg: &FabricConfig) -> (usize, Vec<NodePlan>) {
    let ii = g.nodes.iter().map(Node::initiation_interval).max().unwrap_or(1).max(1);
    let mut plans: Vec<NodePlan> = Vec::with_capacity(g.nodes.len());
    for n in &g.nodes {
        let domain_vars: BTreeSet<&str> = n.domain.iter().map(|l| l.var.as_str()).collect();
        let streamed_varies = n.reads().any(|(t, idx)| {
            let streamed = match g.source(t) {
                Source::Input(_) => true,
                Source::Weight(_) => false,
                Source::Node(p) => !plans[p].gathered && !matches!(g.tensors[t].kind, TensorKind::Partial(_)),
            };
            streamed && idx.iter().any(|ix| ix.terms.iter().any(|(c, v)| *c != 0 && domain_vars.contains(v.as_str())))
        });
        let pack = if n.chunks == 1 && !n.domain.is_empty() && !streamed_varies {
            (cfg.lanes / n.width().next_power_of_two()).max(1)
        } else {
            1
        };
        let items = n.items();
        let cus = items.div_ceil(pack * ii).max(1);
        let slots = items.div_ceil(cus).div_ceil(pack);
        let gathered = cus > 1 || !n.domain.is_empty() || matches!(g.tensors[n.out].kind, TensorKind::Partial(_));
        plans.push(NodePlan { pack, cus, slots, gathered, units: vec![Vec::new(); n.parts.len()] });
    }
    (ii, plans)
}

struct Grid {
    rows: usize,
    cols: usize,
    used: BTreeSet<Pos>,
    cfg: FabricConfig,
}

impl Grid {
    fn take(&mut self, cu: bool, near: Pos) -> Option<Pos> {
        let mut best: Option<(usize, Pos)> = None;
        for r in 0..self.rows {
            for c in 0..self.cols {
                if self.cfg.is_cu(r, c) != cu || self.used.contains(&(r, c)) {
                    continue;
                }
                let d = r.abs_diff(near.0) + c.abs_diff(near.1);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, (r, c)));
                }
            }
        }
        let (_, p) = best?;
        self.used.insert(p);
        Some(p)
    }
}

fn l_path(from: Pos, to: Pos, row_first: bool) -> Vec<Pos> {
    let mut path = vec![from];
    let (mut r, mut c) = from;
    let step_rows = |r: &mut usize, c: usize, path: &mut Vec<Pos>| {
        while *r != to.0 {
            *r = if *r < to.0 { *r + 1 } else { *r - 1 };
            path.push((*r, c));
        }
    };
    if row_first {
        step_rows(&mut r, c, &mut path);
    }
    while c != to.1 {
        c = if c < to.1 { c + 1 } else { c - 1 };
        path.push((r, c));
    }
    if !row_first {
        step_rows(&mut r, c, &mut path);
    }
    path
}

/// Folds, places and routes a split graph onto the fabric.
pub fn place_and_route(g: &Graph, cfg: &FabricConfig) -> Result<Mapping, CompileError> {
    let (ii, mut plans) = fold(g, cfg);
    let need_cus: usize = plans.iter().zip(&g.nodes).map(|(p, n)| p.cus * n.parts.len()).sum();
    let mut mus = Vec::new();
    let mut grid = Grid { rows: cfg.rows, cols: cfg.cols, used: BTreeSet::new(), cfg: cfg.clone() };
    let mut weight_mu: BTreeMap<TensorId, Pos> = BTreeMap::new();
    let mut gather_mu: BTreeMap<TensorId, Pos> = BTreeMap::new();
    let mut streams: BTreeSet<(Pos, Pos)> = BTreeSet::new();
    let input_port = |p: Pos| (p.0, 0);
    let grid_err = |mus_needed: usize| CompileError::Fabric(crate::fabric::FabricError::UsageExceedsGrid {
        cus: need_cus,
        mus: mus_needed,
        cu_slots: cfg.cu_slots(),
        mu_slots: cfg.mu_slots(),
    });
    let mut links = 0;
    let mut inputs_used = BTreeSet::new();
    for (i, n) in g.nodes.iter().enumerate() {
        let plan = plans[i].clone();
        // Anchor near the first producing unit.
        let anchor = n
            .reads()
            .find_map(|(t, _)| match g.source(t) {
                Source::Node(p) => gather_mu.get(&g.nodes[p].out).copied().or(plans[p].units.last().map(|u| u[0])),
                _ => None,
            })
            .unwrap_or((0, 0));
        let mut units: Vec<Vec<Pos>> = Vec::new();
        for (k, part) in n.parts.iter().enumerate() {
            let mut row = Vec::new();
            for c in 0..plan.cus {
                let near = if k == 0 { anchor } else { units[k - 1][c] };
                let pos = grid.take(true, near).ok_or_else(|| grid_err(mus.len()))?;
                if k > 0 {
                    streams.insert((units[k - 1][c], pos));
                }
                for func in part_luts(n, part) {
                    let mp = grid.take(false, pos).ok_or_else(|| grid_err(mus.len() + 1))?;
                    mus.push(MuUnit { role: MuRole::Lut { func, node: i, part: k, copy: c }, pos: mp, words: crate::fixpoint::LUT_ENTRIES });
                    streams.insert((pos, mp));
                    streams.insert((mp, pos));
                }
                row.push(pos);
            }
            links += plan.cus * part.stages();
            for t in n.part_reads(k) {
                let srcs: Vec<Pos> = match g.source(t) {
                    Source::Input(_) => {
                        inputs_used.insert(t);
                        row.iter().map(|&p| input_port(p)).collect()
                    }
                    Source::Weight(_) => {
                        if !weight_mu.contains_key(&t) {
                            let words = g.tensors[t].len();
                            let count = words.div_ceil(cfg.mu_capacity);
                            for b in 0..count {
                                let mp = grid.take(false, row[0]).ok_or_else(|| grid_err(mus.len() + 1))?;
                                if b == 0 {
                                    weight_mu.insert(t, mp);
                                }
                                mus.push(MuUnit { role: MuRole::Weight(t), pos: mp, words: (words - b * cfg.mu_capacity).min(cfg.mu_capacity) });
                            }
                        }
                        vec![weight_mu[&t]]
                    }
                    Source::Node(p) => match gather_mu.get(&t) {
                        Some(&mp) => vec![mp],
                        None => plans[p].units.last().expect("parts").clone(),
                    },
                };
                for s in srcs {
                    for &d in &row {
                        streams.insert((s, d));
                    }
                }
            }
            units.push(row);
        }
        if plan.gathered {
            let words = g.tensors[n.out].len();
            let count = words.div_ceil(cfg.mu_capacity);
            let last = units.last().expect("parts").clone();
            for b in 0..count {
                let mp = grid.take(false, last[0]).ok_or_else(|| grid_err(mus.len() + 1))?;
                if b == 0 {
                    gather_mu.insert(n.out, mp);
                }
                mus.push(MuUnit { role: MuRole::Gather(n.out), pos: mp, words: (words - b * cfg.mu_capacity).min(cfg.mu_capacity) });
            }
            for &u in &last {
                streams.insert((u, gather_mu[&n.out]));
            }
        }
        plans[i].units = units;
    }
    links += inputs_used.len() + g.outputs.len();
    // Streams from one source multicast and streams into one gather memory
    // merge, so each such net occupies a single track per edge.
    let gathers: BTreeSet<Pos> = gather_mu.values().copied().collect();
    let mut usage: BTreeMap<(Pos, Pos), BTreeSet<Pos>> = BTreeMap::new();
    let mut routes = Vec::new();
    for (from, to) in streams {
        if from == to {
            continue;
        }
        let net = if gathers.contains(&to) { to } else { from };
        let free = |a: Pos, b: Pos, usage: &BTreeMap<(Pos, Pos), BTreeSet<Pos>>| {
            usage.get(&edge(a, b)).is_none_or(|s| s.contains(&net) || s.len() < cfg.route_tracks)
        };
        let chosen = [true, false]
            .into_iter()
            .map(|row_first| l_path(from, to, row_first))
            .find(|p| p.windows(2).all(|w| free(w[0], w[1], &usage)))
            .or_else(|| maze(cfg, from, to, |a, b| free(a, b, &usage)));
        let path = chosen.ok_or(CompileError::Unroutable { from, to })?;
        for w in path.windows(2) {
            usage.entry(edge(w[0], w[1])).or_default().insert(net);
        }
        routes.push(Route { from, to, path });
    }
    Ok(Mapping { version: MAPPING_VERSION, config: cfg.clone(), graph: g.clone(), ii, plans, mus, routes, links })
}

/// Breadth-first detour around congested edges.
fn maze(cfg: &FabricConfig, from: Pos, to: Pos, free: impl Fn(Pos, Pos) -> bool) -> Option<Vec<Pos>> {
    let mut prev: BTreeMap<Pos, Pos> = BTreeMap::new();
    let mut queue = std::collections::VecDeque::from([from]);
    prev.insert(from, from);
    while let Some(p) = queue.pop_front() {
        if p == to {
            let mut path = vec![to];
            let mut cur = to;
            while cur != from {
                cur = prev[&cur];
                path.push(cur);
            }
            path.reverse();
            return Some(path);
        }
        let (r, c) = p;
        let next = [(r.wrapping_sub(1), c), (r + 1, c), (r, c.wrapping_sub(1)), (r, c + 1)];
        for q in next {
            if q.0 < cfg.rows && q.1 < cfg.cols && !prev.contains_key(&q) && free(p, q) {
                prev.insert(q, p);
                queue.push_back(q);
            }
        }
    }
    None
}

fn edge(a: Pos, b: Pos) -> (Pos, Pos) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}
