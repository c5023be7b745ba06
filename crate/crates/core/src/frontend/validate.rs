use std::collections::{BTreeMap, HashMap, HashSet};

use serde::Serialize;

use super::ast::*;
use super::{ErrorKind, FrontendError};
use crate::fixpoint::CombineOp;

/// Maximum pattern-tree depth (outer map / inner map / reduce / elemop).
pub const MAX_DEPTH: usize = 4;
/// Default words per memory unit.
pub const DEFAULT_MU_CAPACITY: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Ty {
    Scalar,
    Vector(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PatternKind {
    Map,
    Reduce,
    MapReduceFused,
    Lookup,
    ElemOp,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pattern {
    pub kind: PatternKind,
    pub trip_count: usize,
    pub combine: Option<CombineOp>,
    pub op: Option<ElemOp>,
    pub children: Vec<Pattern>,
}

impl Pattern {
    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(Pattern::depth).max().unwrap_or(0)
    }

    fn leaf(op: ElemOp) -> Pattern {
        let kind = if matches!(op, ElemOp::Lut(_)) { PatternKind::Lookup } else { PatternKind::ElemOp };
        Pattern { kind, trip_count: 1, combine: None, op: Some(op), children: Vec::new() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TypedProgram {
    pub program: Program,
    /// Types of top-level bindings.
    pub types: BTreeMap<String, Ty>,
    /// One pattern forest per top-level binding.
    pub patterns: Vec<Vec<Pattern>>,
    /// Positions of reduces recognised as fused map-reduce pairs.
    pub fused: Vec<Span>,
}

impl TypedProgram {
    pub fn depth(&self) -> usize {
        self.patterns.iter().flatten().map(Pattern::depth).max().unwrap_or(0)
    }

    pub fn name(&self) -> &str {
        &self.program.name
    }
}

#[derive(Debug, Clone, Copy)]
enum Entry {
    Tensor,
    Bind(Ty),
    Loop(usize),
}

struct Checker<'a> {
    prog: &'a Program,
    scopes: Vec<HashMap<String, Entry>>,
    fused: Vec<Span>,
    fusable: HashMap<String, Pattern>,
}

pub fn validate(p: Program) -> Result<TypedProgram, FrontendError> {
    validate_with(p, DEFAULT_MU_CAPACITY)
}

/// Validation with an explicit per-tensor weight capacity in words.
pub fn validate_with(p: Program, mu_capacity: usize) -> Result<TypedProgram, FrontendError> {
    let mut seen = HashSet::new();
    for d in p.inputs.iter().chain(p.weights.iter().map(|w| &w.decl)).chain(&p.outputs) {
        if !seen.insert(d.name.clone()) {
            return Err(FrontendError::new(ErrorKind::Duplicate, d.span, format!("`{}` is declared more than once", d.name)));
        }
        if d.shape.is_empty() || d.shape.contains(&0) {
            return Err(FrontendError::new(ErrorKind::EmptyExtent, d.span, format!("empty extent in `{}`", d.name)));
        }
        if d.shape.len() > 2 {
            return Err(FrontendError::new(ErrorKind::ShapeMismatch, d.span, "tensors have at most two dimensions"));
        }
    }
    for d in &p.outputs {
        if d.shape.len() != 1 {
            return Err(FrontendError::new(ErrorKind::ShapeMismatch, d.span, "outputs must be one-dimensional"));
        }
    }
    for w in &p.weights {
        if w.decl.len() > mu_capacity {
            return Err(FrontendError::new(
                ErrorKind::Capacity,
                w.decl.span,
                format!("weight `{}` has {} words, more than the MU capacity {mu_capacity}", w.decl.name, w.decl.len()),
            ));
        }
    }
    let mut ck = Checker { prog: &p, scopes: vec![HashMap::new()], fused: Vec::new(), fusable: HashMap::new() };
    for d in p.inputs.iter().chain(p.weights.iter().map(|w| &w.decl)) {
        ck.scopes[0].insert(d.name.clone(), Entry::Tensor);
    }
    let mut types = BTreeMap::new();
    let mut patterns = Vec::new();
    for b in &p.body {
        if ck.lookup(&b.name).is_some() {
            return Err(FrontendError::new(ErrorKind::Duplicate, b.span, format!("`{}` is declared more than once", b.name)));
        }
        let (ty, forest) = ck.check(&b.expr)?;
        if let Some(out) = p.output(&b.name) {
            let ok = match ty {
                Ty::Scalar => out.shape == [1],
                Ty::Vector(n) => out.shape == [n],
            };
            if !ok {
                return Err(FrontendError::new(
                    ErrorKind::ShapeMismatch,
                    b.span,
                    format!("output `{}` declared {:?} but assigned {:?}", b.name, out.shape, ty),
                ));
            }
        }
        ck.scopes[0].insert(b.name.clone(), Entry::Bind(ty));
        types.insert(b.name.clone(), ty);
        if let Some(deep) = forest.iter().find(|t| t.depth() > MAX_DEPTH) {
            return Err(FrontendError::new(
                ErrorKind::NestingDepth,
                b.span,
                format!("nesting depth {} exceeds {MAX_DEPTH}", deep.depth()),
            ));
        }
        patterns.push(forest);
    }
    for d in &p.outputs {
        if !types.contains_key(&d.name) {
            return Err(FrontendError::new(ErrorKind::Unassigned, d.span, format!("output `{}` is never assigned", d.name)));
        }
    }
    let fused = ck.fused;
    Ok(TypedProgram { program: p, types, patterns, fused })
}

/// Inclusive range of an affine index given loop trip counts.
pub fn index_range(ix: &IndexExpr, trip: impl Fn(&str) -> usize) -> (i64, i64) {
    let (mut lo, mut hi) = (ix.offset, ix.offset);
    for (c, v) in &ix.terms {
        let top = trip(v) as i64 - 1;
        if *c >= 0 {
            hi += c * top;
        } else {
            lo += c * top;
        }
    }
    (lo, hi)
}

impl Checker<'_> {
    fn lookup(&self, name: &str) -> Option<Entry> {
        self.scopes.iter().rev().find_map(|s| s.get(name).copied())
    }

    fn unknown(name: &str, span: Span) -> FrontendError {
        FrontendError::new(ErrorKind::UnknownIdentifier, span, format!("unknown identifier `{name}`"))
    }

    fn shape_of(&self, name: &str, span: Span) -> Result<Vec<usize>, FrontendError> {
        match self.lookup(name) {
            Some(Entry::Tensor) => Ok(self.prog.tensor(name).expect("declared").shape.clone()),
            Some(Entry::Bind(Ty::Vector(n))) => Ok(vec![n]),
            Some(Entry::Bind(Ty::Scalar)) => Err(FrontendError::new(
                ErrorKind::ShapeMismatch,
                span,
                format!("`{name}` is a scalar"),
            )),
            Some(_) => Err(FrontendError::new(ErrorKind::ShapeMismatch, span, format!("`{name}` has no shape"))),
            None => Err(Self::unknown(name, span)),
        }
    }

    fn trip(&self, t: &Trip, span: Span) -> Result<usize, FrontendError> {
        let n = match t {
            Trip::Lit(n) => *n,
            Trip::SizeOf { name, dim } => {
                let shape = self.shape_of(name, span)?;
                *shape.get(*dim).ok_or_else(|| {
                    FrontendError::new(ErrorKind::ShapeMismatch, span, format!("`{name}` has no dimension {dim}"))
                })?
            }
        };
        if n == 0 {
            return Err(FrontendError::new(ErrorKind::EmptyExtent, span, "empty extent"));
        }
        Ok(n)
    }

    fn loop_trip(&self, v: &str) -> usize {
        match self.lookup(v) {
            Some(Entry::Loop(n)) => n,
            _ => 1,
        }
    }

    /// Type of an expression plus its pattern forest.
    fn check(&mut self, e: &Expr) -> Result<(Ty, Vec<Pattern>), FrontendError> {
        match &e.kind {
            ExprKind::Num(_) => Ok((Ty::Scalar, Vec::new())),
            ExprKind::Name(n) => {
                let t = match self.lookup(n) {
                    Some(Entry::Bind(t)) => t,
                    Some(Entry::Tensor) => {
                        let shape = &self.prog.tensor(n).expect("declared").shape;
                        if shape.len() != 1 {
                            return Err(FrontendError::new(
                                ErrorKind::ShapeMismatch,
                                e.span,
                                format!("`{n}` has {} dimensions and must be indexed", shape.len()),
                            ));
                        }
                        Ty::Vector(shape[0])
                    }
                    Some(Entry::Loop(_)) => {
                        return Err(FrontendError::syntax(e.span, format!("loop variable `{n}` used as a value")))
                    }
                    None => return Err(Self::unknown(n, e.span)),
                };
                Ok((t, Vec::new()))
            }
            ExprKind::Index(n, idx) => {
                let shape = self.shape_of(n, e.span)?;
                if shape.len() != idx.len() {
                    return Err(FrontendError::new(
                        ErrorKind::ShapeMismatch,
                        e.span,
                        format!("`{n}` has {} dimensions, indexed with {}", shape.len(), idx.len()),
                    ));
                }
                for (ix, &extent) in idx.iter().zip(&shape) {
                    for (_, v) in &ix.terms {
                        if !matches!(self.lookup(v), Some(Entry::Loop(_))) {
                            return Err(Self::unknown(v, e.span));
                        }
                    }
                    let (lo, hi) = index_range(ix, |v| self.loop_trip(v));
                    if lo < 0 || hi >= extent as i64 {
                        return Err(FrontendError::new(
                            ErrorKind::IndexOutOfBounds,
                            e.span,
                            format!("index out of bounds: `{n}` dimension of {extent} indexed over [{lo}, {hi}]"),
                        ));
                    }
                }
                Ok((Ty::Scalar, Vec::new()))
            }
            ExprKind::Op(op, args) => {
                if args.len() != op.arity() {
                    return Err(FrontendError::syntax(e.span, format!("`{}` takes {} arguments", op.name(), op.arity())));
                }
                let mut pats = Vec::new();
                for a in args {
                    let (t, p) = self.check(a)?;
                    if t != Ty::Scalar {
                        return Err(FrontendError::new(
                            ErrorKind::ShapeMismatch,
                            a.span,
                            format!("`{}` expects scalar operands, found a vector", op.name()),
                        ));
                    }
                    pats.extend(p);
                }
                pats.push(Pattern::leaf(*op));
                Ok((Ty::Scalar, pats))
            }
            ExprKind::Map { trip, var, body } => {
                let (n, children) = self.map_body(trip, var, body, e.span)?;
                let p = Pattern { kind: PatternKind::Map, trip_count: n, combine: None, op: None, children };
                Ok((Ty::Vector(n), vec![p]))
            }
            ExprKind::Reduce { input, combine } => {
                let op = match combine.kind {
                    CombineKind::Op(op) => op,
                    CombineKind::Sub => {
                        return Err(FrontendError::new(ErrorKind::NonAssociative, e.span, "non-associative combine"))
                    }
                };
                let (t, mut pats) = self.check(input)?;
                let n = match t {
                    Ty::Vector(0) => {
                        return Err(FrontendError::new(ErrorKind::EmptyReduce, e.span, "reduce over empty vector"))
                    }
                    Ty::Vector(n) => n,
                    Ty::Scalar => {
                        return Err(FrontendError::new(
                            ErrorKind::ShapeMismatch,
                            input.span,
                            "reduce input must be a vector",
                        ))
                    }
                };
                let fused_local = match &input.kind {
                    ExprKind::Name(name) => self.fusable.remove(name),
                    _ => None,
                };
                if let Some(mut p) = fused_local {
                    self.fused.push(e.span);
                    p.kind = PatternKind::MapReduceFused;
                    p.combine = Some(op);
                    return Ok((Ty::Scalar, vec![p]));
                }
                if matches!(input.kind, ExprKind::Map { .. }) && pats.len() == 1 {
                    self.fused.push(e.span);
                    let mut p = pats.pop().expect("one pattern");
                    p.kind = PatternKind::MapReduceFused;
                    p.combine = Some(op);
                    return Ok((Ty::Scalar, vec![p]));
                }
                let p = Pattern { kind: PatternKind::Reduce, trip_count: n, combine: Some(op), op: None, children: pats };
                Ok((Ty::Scalar, vec![p]))
            }
        }
    }

    fn map_body(&mut self, trip: &Trip, var: &str, body: &Block, span: Span) -> Result<(usize, Vec<Pattern>), FrontendError> {
        let n = self.trip(trip, span)?;
        self.scopes.push(HashMap::new());
        self.scopes.last_mut().expect("scope").insert(var.to_string(), Entry::Loop(n));
        let r = self.block(body);
        self.scopes.pop();
        let (t, pats) = r?;
        if t != Ty::Scalar {
            return Err(FrontendError::new(ErrorKind::ShapeMismatch, body.result.span, "map body must be a scalar"));
        }
        Ok((n, pats))
    }

    fn block(&mut self, b: &Block) -> Result<(Ty, Vec<Pattern>), FrontendError> {
        let mut uses: HashMap<&str, (usize, usize)> = HashMap::new();
        for (k, l) in b.lets.iter().enumerate() {
            uses.insert(&l.name, (0, 0));
            let later = b.lets[k + 1..].iter().map(|x| &x.expr).chain(std::iter::once(b.result.as_ref()));
            for e in later {
                count_uses(e, &l.name, uses.get_mut(l.name.as_str()).expect("entry"));
            }
        }
        let mut pats = Vec::new();
        for l in &b.lets {
            if self.lookup(&l.name).is_some() {
                return Err(FrontendError::new(ErrorKind::Duplicate, l.span, format!("`{}` is declared more than once", l.name)));
            }
            let (t, p) = self.check(&l.expr)?;
            self.scopes.last_mut().expect("scope").insert(l.name.clone(), Entry::Bind(t));
            let (total, as_reduce) = uses[l.name.as_str()];
            if matches!(l.expr.kind, ExprKind::Map { .. }) && total == 1 && as_reduce == 1 && p.len() == 1 {
                self.fusable.insert(l.name.clone(), p.into_iter().next().expect("one pattern"));
            } else {
                pats.extend(p);
            }
        }
        let (t, p) = self.check(&b.result)?;
        pats.extend(p);
        Ok((t, pats))
    }
}

/// Counts references to `name`: (all uses, uses as a direct reduce input).
pub fn count_uses(e: &Expr, name: &str, acc: &mut (usize, usize)) {
    match &e.kind {
        ExprKind::Name(n) if n == name => acc.0 += 1,
        ExprKind::Index(n, _) if n == name => acc.0 += 1,
        ExprKind::Num(_) | ExprKind::Name(_) | ExprKind::Index(..) => {}
        ExprKind::Op(_, args) => args.iter().for_each(|a| count_uses(a, name, acc)),
        ExprKind::Map { trip, body, .. } => {
            if let Trip::SizeOf { name: n, .. } = trip {
                if n == name {
                    acc.0 += 1;
                }
            }
            body.lets.iter().for_each(|l| count_uses(&l.expr, name, acc));
            count_uses(&body.result, name, acc);
        }
        ExprKind::Reduce { input, .. } => {
            if matches!(&input.kind, ExprKind::Name(n) if n == name) {
                acc.1 += 1;
            }
            count_uses(input, name, acc);
        }
    }
}
