//! Target-dependent transforms: unrolling, lane chunking and stage splitting.

use std::collections::BTreeSet;

use super::graph::*;
use super::CompileError;
use crate::fabric::FabricConfig;
use crate::frontend::ast::{ElemOp, IndexExpr};

/// Sets the number of physical copies of every node's outer loop body to
/// `min(u, trip)`. Non-dividing factors leave masked iterations in the last
/// slot.
pub fn unroll(mut g: Graph, u: usize) -> Result<Graph, CompileError> {
    if u == 0 {
        return Err(CompileError::Unroll);
    }
    for n in &mut g.nodes {
        n.unroll = u.min(n.domain_points()).max(1);
    }
    Ok(g)
}

/// Fits every node to the compute unit: lanes wider than the unit become
/// chunks (reductions gain a combining node), bodies deeper than the stage
/// count become chains of parts.
pub fn split(mut g: Graph, cfg: &FabricConfig) -> Result<Graph, CompileError> {
    let mut i = 0;
    while i < g.nodes.len() {
        let width = g.nodes[i].width();
        if width > cfg.lanes {
            let chunks = width.div_ceil(cfg.lanes);
            g.nodes[i].chunks = chunks;
            if let Some(op) = g.nodes[i].reduce {
                let n = &g.nodes[i];
                let final_out = n.out;
                let partial = g.tensors.len();
                let shape = n.domain.iter().map(|l| l.trip).chain([chunks]).collect();
                g.tensors.push(TensorInfo {
                    name: format!("{}_partial", n.name),
                    kind: TensorKind::Partial(op),
                    shape,
                    format: g.precision,
                });
                let var = format!("_c{i}_{}", g.nodes.len());
                let index = n.domain.iter().map(|l| IndexExpr::var(&l.var)).chain([IndexExpr::var(&var)]).collect();
                let combine = Node {
                    name: format!("{}_combine", n.name),
                    domain: n.domain.clone(),
                    lane: Loop { var, trip: chunks },
                    body: Vec::new(),
                    result: Operand::Read { tensor: partial, index },
                    reduce: Some(op),
                    out: final_out,
                    chunks: 1,
                    unroll: n.unroll,
                    parts: Vec::new(),
                };
                g.nodes[i].out = partial;
                g.nodes.insert(i + 1, combine);
            }
        }
        let parts = stage_parts(&g, &g.nodes[i], cfg);
        g.nodes[i].parts = parts;
        i += 1;
    }
    g.check().map_err(CompileError::Internal)?;
    Ok(g)
}

fn weight_reads(g: &Graph, ins: &Instr) -> BTreeSet<TensorId> {
    ins.args
        .iter()
        .filter_map(|a| match a {
            Operand::Read { tensor, .. } if g.tensors[*tensor].kind == TensorKind::Weight => Some(*tensor),
            _ => None,
        })
        .collect()
}

fn stage_parts(g: &Graph, n: &Node, cfg: &FabricConfig) -> Vec<Part> {
    let mut parts = Vec::new();
    let mut start = 0;
    let mut banks = BTreeSet::new();
    for (k, ins) in n.body.iter().enumerate() {
        let w = weight_reads(g, ins);
        let merged: BTreeSet<_> = banks.union(&w).copied().collect();
        if k - start == cfg.stages || merged.len() > cfg.mu_banks {
            parts.push(Part { start, end: k, reduce: false });
            start = k;
            banks = w;
        } else {
            banks = merged;
        }
    }
    let end = n.body.len();
    match n.reduce {
        Some(_) if end - start == cfg.stages => {
            parts.push(Part { start, end, reduce: false });
            parts.push(Part { start: end, end, reduce: true });
        }
        r => parts.push(Part { start, end, reduce: r.is_some() }),
    }
    parts
}

/// Lookup functions used by a part.
pub fn part_luts(n: &Node, p: &Part) -> Vec<crate::fixpoint::LutFn> {
    let mut fs: Vec<_> = n.body[p.start..p.end]
        .iter()
        .filter_map(|i| match i.op {
            ElemOp::Lut(f) => Some(f),
            _ => None,
        })
        .collect();
    fs.sort_by_key(|f| f.name());
    fs.dedup();
    fs
}
