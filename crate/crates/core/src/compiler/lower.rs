//! Lowering of validated programs into dataflow graphs.

use std::collections::HashMap;

use super::graph::*;
use super::CompileError;
use crate::fixpoint::{quantize, CombineOp};
use crate::frontend::ast::*;
use crate::frontend::validate::{count_uses, TypedProgram};

/// Scalar expression evaluated per loop point; leaves read tensors.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum SExpr {
    Const(i64),
    Read(TensorId, Vec<IndexExpr>),
    Op(ElemOp, Vec<SExpr>),
}

#[derive(Debug, Clone)]
struct VecRef {
    tensor: TensorId,
    prefix: Vec<IndexExpr>,
    len: usize,
}

#[derive(Debug, Clone)]
enum Bound {
    Scalar(SExpr),
    Vector(VecRef),
    /// A map consumed once by a reduce, lowered at its use.
    Deferred(Expr),
}

struct Lowerer<'a> {
    prog: &'a Program,
    g: Graph,
    scopes: Vec<HashMap<String, Bound>>,
    fresh: usize,
}

/// Lowers a validated program. Nodes are unsplit: one chunk, one part,
/// fully unrolled.
pub fn lower(tp: &TypedProgram) -> Result<Graph, CompileError> {
    let prog = &tp.program;
    let mut g = Graph {
        name: prog.name.clone(),
        precision: prog.precision,
        tensors: Vec::new(),
        nodes: Vec::new(),
        outputs: Vec::new(),
    };
    for d in &prog.inputs {
        g.tensors.push(TensorInfo { name: d.name.clone(), kind: TensorKind::Input, shape: d.shape.clone(), format: d.format });
    }
    for w in &prog.weights {
        let d = &w.decl;
        g.tensors.push(TensorInfo { name: d.name.clone(), kind: TensorKind::Weight, shape: d.shape.clone(), format: d.format });
    }
    let mut lw = Lowerer { prog, g, scopes: vec![HashMap::new()], fresh: 0 };
    for b in &prog.body {
        let v = lw.value(&b.expr, &[])?;
        let v = match v {
            Bound::Scalar(s) if !matches!(s, SExpr::Read(..) | SExpr::Const(_)) => {
                let t = lw.node(&b.name, &[], Loop { var: "_s".into(), trip: 1 }, &s, None);
                Bound::Scalar(SExpr::Read(t, vec![IndexExpr::constant(0)]))
            }
            v => v,
        };
        lw.scopes[0].insert(b.name.clone(), v);
    }
    for o in &prog.outputs {
        let t = lw.output_tensor(&o.name, o.len())?;
        lw.g.outputs.push(OutputPort { name: o.name.clone(), tensor: t, format: o.format });
    }
    lw.g.check().map_err(CompileError::Internal)?;
    Ok(lw.g)
}

impl Lowerer<'_> {
    fn lookup(&self, name: &str) -> Option<&Bound> {
        self.scopes.iter().rev().find_map(|s| s.get(name))
    }

    fn tensor(&self, name: &str) -> Option<TensorId> {
        self.prog.tensor(name).and_then(|_| self.g.tensor_id(name))
    }

    fn trip(&self, t: &Trip) -> Result<usize, CompileError> {
        match t {
            Trip::Lit(n) => Ok(*n),
            Trip::SizeOf { name, dim } => {
                if let Some(d) = self.prog.tensor(name) {
                    return Ok(d.shape[*dim]);
                }
                match self.lookup(name) {
                    Some(Bound::Vector(v)) => Ok(v.len),
                    _ => Err(CompileError::Internal(format!("no size for `{name}`"))),
                }
            }
        }
    }

    fn fresh_name(&mut self, base: &str) -> String {
        self.fresh += 1;
        format!("{base}_{}", self.fresh)
    }

    /// Adds a node and its output buffer.
    fn node(&mut self, name: &str, ctx: &[Loop], lane: Loop, s: &SExpr, reduce: Option<CombineOp>) -> TensorId {
        let mut shape: Vec<usize> = ctx.iter().map(|l| l.trip).collect();
        if reduce.is_none() {
            shape.push(lane.trip);
        } else if shape.is_empty() {
            shape.push(1);
        }
        let out = self.g.tensors.len();
        let node_name = self.fresh_name(name);
        self.g.tensors.push(TensorInfo {
            name: node_name.clone(),
            kind: TensorKind::Buffer,
            shape,
            format: self.prog.precision,
        });
        let mut body = Vec::new();
        let mut cse = HashMap::new();
        let result = emit(s, &mut body, &mut cse);
        let parts = vec![Part { start: 0, end: body.len(), reduce: reduce.is_some() }];
        let unroll = ctx.iter().map(|l| l.trip).product();
        self.g.nodes.push(Node {
            name: node_name,
            domain: ctx.to_vec(),
            lane,
            body,
            result,
            reduce,
            out,
            chunks: 1,
            unroll,
            parts,
        });
        out
    }

    fn constant(&self, x: f64) -> SExpr {
        SExpr::Const(quantize(x, self.prog.precision).raw)
    }

    fn scalar(&mut self, e: &Expr, ctx: &[Loop]) -> Result<SExpr, CompileError> {
        match self.value(e, ctx)? {
            Bound::Scalar(s) => Ok(s),
            _ => Err(CompileError::Internal("expected a scalar".into())),
        }
    }

    fn vector(&mut self, e: &Expr, ctx: &[Loop]) -> Result<VecRef, CompileError> {
        match self.value(e, ctx)? {
            Bound::Vector(v) => Ok(v),
            Bound::Deferred(d) => self.vector(&d, ctx),
            Bound::Scalar(_) => Err(CompileError::Internal("expected a vector".into())),
        }
    }

    fn value(&mut self, e: &Expr, ctx: &[Loop]) -> Result<Bound, CompileError> {
        Ok(match &e.kind {
            ExprKind::Num(x) => Bound::Scalar(self.constant(*x)),
            ExprKind::Name(n) => match self.lookup(n) {
                Some(b) => b.clone(),
                None => {
                    let t = self.tensor(n).ok_or_else(|| CompileError::Internal(format!("unknown `{n}`")))?;
                    Bound::Vector(VecRef { tensor: t, prefix: Vec::new(), len: self.g.tensors[t].len() })
                }
            },
            ExprKind::Index(n, idx) => match self.lookup(n).cloned() {
                Some(Bound::Vector(v)) => {
                    Bound::Scalar(SExpr::Read(v.tensor, v.prefix.iter().chain(idx).cloned().collect()))
                }
                Some(Bound::Deferred(d)) => {
                    let v = self.vector(&d, ctx)?;
                    Bound::Scalar(SExpr::Read(v.tensor, v.prefix.iter().chain(idx).cloned().collect()))
                }
                Some(Bound::Scalar(s)) => Bound::Scalar(s),
                None => {
                    let t = self.tensor(n).ok_or_else(|| CompileError::Internal(format!("unknown `{n}`")))?;
                    Bound::Scalar(SExpr::Read(t, idx.clone()))
                }
            },
            ExprKind::Op(op, args) => {
                let a = args.iter().map(|x| self.scalar(x, ctx)).collect::<Result<Vec<_>, _>>()?;
                Bound::Scalar(SExpr::Op(*op, a))
            }
            ExprKind::Map { trip, var, body } => {
                let n = self.trip(trip)?;
                let lane = Loop { var: var.clone(), trip: n };
                let inner: Vec<Loop> = ctx.iter().cloned().chain([lane.clone()]).collect();
                let s = self.block(body, &inner)?;
                let prefix: Vec<IndexExpr> = ctx.iter().map(|l| IndexExpr::var(&l.var)).collect();
                if let SExpr::Read(t, idx) = &s {
                    let whole: Vec<IndexExpr> = inner.iter().map(|l| IndexExpr::var(&l.var)).collect();
                    let shape: Vec<usize> = inner.iter().map(|l| l.trip).collect();
                    if *idx == whole && self.g.tensors[*t].kind == TensorKind::Buffer && self.g.tensors[*t].shape == shape {
                        return Ok(Bound::Vector(VecRef { tensor: *t, prefix, len: n }));
                    }
                }
                let t = self.node("map", ctx, lane, &s, None);
                Bound::Vector(VecRef { tensor: t, prefix, len: n })
            }
            ExprKind::Reduce { input, combine } => {
                let CombineKind::Op(op) = combine.kind else {
                    return Err(CompileError::Internal("non-associative combine".into()));
                };
                let src = match &input.kind {
                    ExprKind::Name(n) => match self.lookup(n) {
                        Some(Bound::Deferred(d)) => d.clone(),
                        _ => (**input).clone(),
                    },
                    _ => (**input).clone(),
                };
                let (lane, s) = match &src.kind {
                    ExprKind::Map { trip, var, body } => {
                        let lane = Loop { var: var.clone(), trip: self.trip(trip)? };
                        let inner: Vec<Loop> = ctx.iter().cloned().chain([lane.clone()]).collect();
                        (lane, self.block(body, &inner)?)
                    }
                    _ => {
                        let v = self.vector(&src, ctx)?;
                        let var = self.fresh_name("_r");
                        let idx = v.prefix.iter().cloned().chain([IndexExpr::var(&var)]).collect();
                        (Loop { var, trip: v.len }, SExpr::Read(v.tensor, idx))
                    }
                };
                let t = self.node("reduce", ctx, lane, &s, Some(op));
                let idx = if ctx.is_empty() {
                    vec![IndexExpr::constant(0)]
                } else {
                    ctx.iter().map(|l| IndexExpr::var(&l.var)).collect()
                };
                Bound::Scalar(SExpr::Read(t, idx))
            }
        })
    }

    fn block(&mut self, b: &Block, ctx: &[Loop]) -> Result<SExpr, CompileError> {
        self.scopes.push(HashMap::new());
        for (k, l) in b.lets.iter().enumerate() {
            let mut uses = (0, 0);
            for e in b.lets[k + 1..].iter().map(|x| &x.expr).chain([b.result.as_ref()]) {
                count_uses(e, &l.name, &mut uses);
            }
            let v = if matches!(l.expr.kind, ExprKind::Map { .. }) && uses == (1, 1) {
                Bound::Deferred(l.expr.clone())
            } else {
                self.value(&l.expr, ctx)?
            };
            self.scopes.last_mut().expect("scope").insert(l.name.clone(), v);
        }
        let r = self.scalar(&b.result, ctx);
        self.scopes.pop();
        r
    }

    /// A 1-D buffer holding the named top-level binding.
    fn output_tensor(&mut self, name: &str, len: usize) -> Result<TensorId, CompileError> {
        let b = self.lookup(name).cloned().ok_or_else(|| CompileError::Internal(format!("unbound output `{name}`")))?;
        let s = match b {
            Bound::Vector(v) if v.prefix.is_empty() && self.g.tensors[v.tensor].kind == TensorKind::Buffer => {
                return Ok(v.tensor)
            }
            Bound::Vector(v) => {
                let var = self.fresh_name("_o");
                let idx = v.prefix.iter().cloned().chain([IndexExpr::var(&var)]).collect();
                let t = self.node(name, &[], Loop { var, trip: v.len }, &SExpr::Read(v.tensor, idx), None);
                return Ok(t);
            }
            Bound::Scalar(SExpr::Read(t, _)) if self.g.tensors[t].kind == TensorKind::Buffer && self.g.tensors[t].shape == [1] => {
                return Ok(t)
            }
            Bound::Scalar(s) => s,
            Bound::Deferred(_) => return Err(CompileError::Internal("deferred output".into())),
        };
        debug_assert_eq!(len, 1);
        Ok(self.node(name, &[], Loop { var: "_s".into(), trip: 1 }, &s, None))
    }
}

fn emit(s: &SExpr, body: &mut Vec<Instr>, cse: &mut HashMap<SExpr, usize>) -> Operand {
    match s {
        SExpr::Const(c) => Operand::Const(*c),
        SExpr::Read(t, idx) => Operand::Read { tensor: *t, index: idx.clone() },
        SExpr::Op(op, args) => {
            if let Some(&r) = cse.get(s) {
                return Operand::Reg(r);
            }
            let args = args.iter().map(|a| emit(a, body, cse)).collect();
            body.push(Instr { op: *op, args });
            cse.insert(s.clone(), body.len() - 1);
            Operand::Reg(body.len() - 1)
        }
    }
}
