//! Dataflow graph: nodes are SIMD loop bodies reading and writing tensors.

use serde::{Deserialize, Serialize};

use crate::fixpoint::{CombineOp, FixedFormat};
use crate::frontend::ast::{ElemOp, IndexExpr};

pub type TensorId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TensorKind {
    Input,
    Weight,
    /// Intermediate values in the compute format.
    Buffer,
    /// Unfinished reduction partials, one per lane chunk.
    Partial(CombineOp),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub kind: TensorKind,
    pub shape: Vec<usize>,
    pub format: FixedFormat,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Loop {
    pub var: String,
    pub trip: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Operand {
    /// Raw value in the compute format.
    Const(i64),
    Reg(usize),
    Read { tensor: TensorId, index: Vec<IndexExpr> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instr {
    pub op: ElemOp,
    pub args: Vec<Operand>,
}

/// A contiguous run of instructions placed on one chain of compute units.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Part {
    pub start: usize,
    pub end: usize,
    pub reduce: bool,
}

impl Part {
    /// Pipeline stages occupied; an empty part still forwards its value.
    pub fn stages(&self) -> usize {
        (self.end - self.start + self.reduce as usize).max(1)
    }
}

/// One SIMD loop nest. For every point of `domain` the body runs once per
/// lane of `lane`; a map writes `out[domain.., lane]`, a reduce folds the
/// lanes and writes `out[domain..]` (or a partial per chunk).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    pub domain: Vec<Loop>,
    pub lane: Loop,
    pub body: Vec<Instr>,
    pub result: Operand,
    pub reduce: Option<CombineOp>,
    pub out: TensorId,
    /// Lane chunks, each at most one compute unit wide.
    pub chunks: usize,
    /// Physical copies of the domain loop body.
    pub unroll: usize,
    pub parts: Vec<Part>,
}

impl Node {
    pub fn domain_points(&self) -> usize {
        self.domain.iter().map(|l| l.trip).product()
    }

    pub fn width(&self) -> usize {
        self.lane.trip
    }

    /// Work items: one per domain point and lane chunk.
    pub fn items(&self) -> usize {
        self.domain_points() * self.chunks
    }

    /// Cycles this node needs per input at its unroll factor.
    pub fn initiation_interval(&self) -> usize {
        self.domain_points().div_ceil(self.unroll.max(1))
    }

    /// Every operand read by the body and the result.
    pub fn reads(&self) -> impl Iterator<Item = (TensorId, &Vec<IndexExpr>)> {
        self.body
            .iter()
            .flat_map(|i| i.args.iter())
            .chain(std::iter::once(&self.result))
            .filter_map(|o| match o {
                Operand::Read { tensor, index } => Some((*tensor, index)),
                _ => None,
            })
    }

    pub fn part_reads(&self, k: usize) -> Vec<TensorId> {
        let p = &self.parts[k];
        let mut ops: Vec<&Operand> = self.body[p.start..p.end].iter().flat_map(|i| i.args.iter()).collect();
        if k + 1 == self.parts.len() {
            ops.push(&self.result);
        }
        let mut ts: Vec<TensorId> = ops
            .into_iter()
            .filter_map(|o| match o {
                Operand::Read { tensor, .. } => Some(*tensor),
                _ => None,
            })
            .collect();
        ts.sort_unstable();
        ts.dedup();
        ts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputPort {
    pub name: String,
    pub tensor: TensorId,
    pub format: FixedFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    pub name: String,
    pub precision: FixedFormat,
    pub tensors: Vec<TensorInfo>,
    /// In topological order.
    pub nodes: Vec<Node>,
    pub outputs: Vec<OutputPort>,
}

/// A producer to consumer dependency.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Input(TensorId),
    Weight(TensorId),
    Node(usize),
}

impl Graph {
    pub fn producer(&self, t: TensorId) -> Option<usize> {
        self.nodes.iter().position(|n| n.out == t)
    }

    pub fn source(&self, t: TensorId) -> Source {
        match self.tensors[t].kind {
            TensorKind::Input => Source::Input(t),
            TensorKind::Weight => Source::Weight(t),
            _ => Source::Node(self.producer(t).expect("buffer has a producer")),
        }
    }

    /// `(producer, consumer)` edges between nodes.
    pub fn edges(&self) -> Vec<(Source, usize)> {
        let mut out = Vec::new();
        for (i, n) in self.nodes.iter().enumerate() {
            let mut ts: Vec<TensorId> = n.reads().map(|(t, _)| t).collect();
            ts.sort_unstable();
            ts.dedup();
            out.extend(ts.into_iter().map(|t| (self.source(t), i)));
        }
        out
    }

    pub fn tensor_id(&self, name: &str) -> Option<TensorId> {
        self.tensors.iter().position(|t| t.name == name)
    }

    /// Checks structural invariants: topological order, arity, index rank.
    pub fn check(&self) -> Result<(), String> {
        for (i, n) in self.nodes.iter().enumerate() {
            for (t, idx) in n.reads() {
                let info = self.tensors.get(t).ok_or_else(|| format!("node {i} reads unknown tensor {t}"))?;
                if idx.len() != info.shape.len() {
                    return Err(format!("node `{}` indexes `{}` with rank {}", n.name, info.name, idx.len()));
                }
                if let Source::Node(p) = self.source(t) {
                    if p >= i {
                        return Err(format!("node `{}` reads `{}` before it is produced", n.name, info.name));
                    }
                }
            }
            for (k, ins) in n.body.iter().enumerate() {
                if ins.args.len() != ins.op.arity() {
                    return Err(format!("node `{}` instruction {k} has wrong arity", n.name));
                }
                if ins.args.iter().any(|a| matches!(a, Operand::Reg(r) if *r >= k)) {
                    return Err(format!("node `{}` instruction {k} uses a later register", n.name));
                }
            }
            let expected: Vec<usize> = match (n.reduce, self.tensors[n.out].kind) {
                (Some(_), TensorKind::Partial(_)) => {
                    n.domain.iter().map(|l| l.trip).chain([n.chunks]).collect()
                }
                (Some(_), _) if n.domain.is_empty() => vec![1],
                (Some(_), _) => n.domain.iter().map(|l| l.trip).collect(),
                (None, _) => n.domain.iter().map(|l| l.trip).chain([n.width()]).collect(),
            };
            if self.tensors[n.out].shape != expected {
                return Err(format!("node `{}` output shape mismatch", n.name));
            }
        }
        for o in &self.outputs {
            if self.tensors[o.tensor].shape.len() != 1 {
                return Err(format!("output `{}` is not a vector", o.name));
            }
        }
        Ok(())
    }
}
