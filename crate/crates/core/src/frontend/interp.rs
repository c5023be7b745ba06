//! Reference tree-walking interpreter, in bit-exact fixed point or in reals.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use super::ast::*;
use super::validate::TypedProgram;
use crate::fixpoint::{self, CombineOp, FixedFormat, FixedValue, Lut, LutFn};

pub type Tensors = BTreeMap<String, Vec<FixedValue>>;
pub type RealTensors = BTreeMap<String, Vec<f64>>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InterpError {
    #[error("missing tensor `{0}`")]
    Missing(String),
    #[error("tensor `{name}` has {got} values, expected {expected}")]
    Length { name: String, expected: usize, got: usize },
}

/// Arithmetic used by the interpreter.
pub trait Domain {
    type V: Copy;
    fn lit(&self, x: f64) -> Self::V;
    /// Converts a stored tensor element into the compute representation.
    fn load(&self, v: Self::V) -> Self::V;
    fn store(&self, v: Self::V, f: FixedFormat) -> Self::V;
    fn op(&self, op: ElemOp, a: &[Self::V]) -> Self::V;
    fn reduce(&self, op: CombineOp, xs: &[Self::V]) -> Self::V;
}

/// Fixed-point arithmetic in the program's compute format.
pub struct Fixed {
    pub format: FixedFormat,
    luts: HashMap<LutFn, Lut>,
}

impl Fixed {
    pub fn new(format: FixedFormat) -> Self {
        let luts = LutFn::ALL.iter().map(|&f| (f, fixpoint::standard_lut(f, format))).collect();
        Fixed { format, luts }
    }

    pub fn lut(&self, f: LutFn) -> &Lut {
        &self.luts[&f]
    }
}

/// Applies one element operation on compute-format operands.
pub fn apply_fixed(op: ElemOp, a: &[FixedValue], luts: &Fixed) -> FixedValue {
    let r = match op {
        ElemOp::Add => fixpoint::fx_add(a[0], a[1]),
        ElemOp::Sub => fixpoint::fx_sub(a[0], a[1]),
        ElemOp::Mul => fixpoint::fx_mul(a[0], a[1]),
        ElemOp::Max => fixpoint::fx_max(a[0], a[1]),
        ElemOp::Min => fixpoint::fx_min(a[0], a[1]),
        ElemOp::Select => fixpoint::select(a[0], a[1], a[2]),
        ElemOp::Relu => Ok(fixpoint::relu(a[0])),
        ElemOp::LeakyRelu { shift } => Ok(fixpoint::leaky_relu(a[0], shift)),
        ElemOp::Lut(f) => Ok(luts.lut(f).eval(a[0])),
    };
    r.expect("operands share the compute format")
}

impl Domain for Fixed {
    type V = FixedValue;

    fn lit(&self, x: f64) -> FixedValue {
        fixpoint::quantize(x, self.format)
    }

    fn load(&self, v: FixedValue) -> FixedValue {
        v.convert(self.format)
    }

    fn store(&self, v: FixedValue, f: FixedFormat) -> FixedValue {
        v.convert(f)
    }

    fn op(&self, op: ElemOp, a: &[FixedValue]) -> FixedValue {
        apply_fixed(op, a, self)
    }

    fn reduce(&self, op: CombineOp, xs: &[FixedValue]) -> FixedValue {
        fixpoint::reduce_vector(xs, op).expect("validated non-empty reduce")
    }
}

/// Real-valued arithmetic with exact activation functions.
pub struct Real;

impl Domain for Real {
    type V = f64;

    fn lit(&self, x: f64) -> f64 {
        x
    }

    fn load(&self, v: f64) -> f64 {
        v
    }

    fn store(&self, v: f64, _f: FixedFormat) -> f64 {
        v
    }

    fn op(&self, op: ElemOp, a: &[f64]) -> f64 {
        match op {
            ElemOp::Add => a[0] + a[1],
            ElemOp::Sub => a[0] - a[1],
            ElemOp::Mul => a[0] * a[1],
            ElemOp::Max => a[0].max(a[1]),
            ElemOp::Min => a[0].min(a[1]),
            ElemOp::Select => {
                if a[0] > 0.0 {
                    a[1]
                } else {
                    a[2]
                }
            }
            ElemOp::Relu => a[0].max(0.0),
            ElemOp::LeakyRelu { shift } => {
                if a[0] < 0.0 {
                    a[0] / (1u64 << shift) as f64
                } else {
                    a[0]
                }
            }
            ElemOp::Lut(f) => f.eval(a[0]),
        }
    }

    fn reduce(&self, op: CombineOp, xs: &[f64]) -> f64 {
        let it = xs.iter().copied();
        match op {
            CombineOp::Add => it.sum(),
            CombineOp::Mul => it.product(),
            CombineOp::Max => it.fold(f64::NEG_INFINITY, f64::max),
            CombineOp::Min => it.fold(f64::INFINITY, f64::min),
        }
    }
}

#[derive(Clone)]
enum Val<V> {
    Scalar(V),
    Vector(Vec<V>),
}

struct Eval<'a, D: Domain> {
    d: &'a D,
    prog: &'a Program,
    tensors: HashMap<&'a str, &'a [D::V]>,
    loops: Vec<(String, i64)>,
    scopes: Vec<HashMap<String, Val<D::V>>>,
}

pub fn interpret(tp: &TypedProgram, inputs: &Tensors, weights: &Tensors) -> Result<Tensors, InterpError> {
    let d = Fixed::new(tp.program.precision);
    run(&d, tp, inputs, weights)
}

pub fn interpret_real(tp: &TypedProgram, inputs: &RealTensors, weights: &RealTensors) -> Result<RealTensors, InterpError> {
    run(&Real, tp, inputs, weights)
}

/// Runs the program in any arithmetic domain.
pub fn run<D: Domain>(
    d: &D,
    tp: &TypedProgram,
    inputs: &BTreeMap<String, Vec<D::V>>,
    weights: &BTreeMap<String, Vec<D::V>>,
) -> Result<BTreeMap<String, Vec<D::V>>, InterpError> {
    let prog = &tp.program;
    let mut tensors = HashMap::new();
    let decls = prog.inputs.iter().map(|x| (x, inputs)).chain(prog.weights.iter().map(|w| (&w.decl, weights)));
    for (decl, src) in decls {
        let v = src.get(&decl.name).ok_or_else(|| InterpError::Missing(decl.name.clone()))?;
        if v.len() != decl.len() {
            return Err(InterpError::Length { name: decl.name.clone(), expected: decl.len(), got: v.len() });
        }
        tensors.insert(decl.name.as_str(), v.as_slice());
    }
    let mut ev = Eval { d, prog, tensors, loops: Vec::new(), scopes: vec![HashMap::new()] };
    for b in &prog.body {
        let v = ev.expr(&b.expr);
        ev.scopes[0].insert(b.name.clone(), v);
    }
    let mut out = BTreeMap::new();
    for o in &prog.outputs {
        let vals = match &ev.scopes[0][&o.name] {
            Val::Scalar(s) => vec![*s],
            Val::Vector(v) => v.clone(),
        };
        out.insert(o.name.clone(), vals.into_iter().map(|x| d.store(x, o.format)).collect());
    }
    Ok(out)
}

impl<D: Domain> Eval<'_, D> {
    fn var(&self, name: &str) -> i64 {
        self.loops.iter().rev().find(|(n, _)| n == name).map(|(_, v)| *v).expect("bound loop variable")
    }

    fn binding(&self, name: &str) -> Option<&Val<D::V>> {
        self.scopes.iter().rev().find_map(|s| s.get(name))
    }

    fn trip(&self, t: &Trip) -> usize {
        match t {
            Trip::Lit(n) => *n,
            Trip::SizeOf { name, dim } => match self.prog.tensor(name) {
                Some(decl) => decl.shape[*dim],
                None => match self.binding(name) {
                    Some(Val::Vector(v)) => v.len(),
                    _ => 1,
                },
            },
        }
    }

    fn expr(&mut self, e: &Expr) -> Val<D::V> {
        match &e.kind {
            ExprKind::Num(x) => Val::Scalar(self.d.lit(*x)),
            ExprKind::Name(n) => match self.binding(n) {
                Some(v) => v.clone(),
                None => Val::Vector(self.tensors[n.as_str()].iter().map(|&x| self.d.load(x)).collect()),
            },
            ExprKind::Index(n, idx) => {
                let pos: Vec<i64> = idx.iter().map(|ix| ix.eval(|v| self.var(v))).collect();
                if let Some(v) = self.binding(n) {
                    return match v {
                        Val::Vector(v) => Val::Scalar(v[pos[0] as usize]),
                        Val::Scalar(s) => Val::Scalar(*s),
                    };
                }
                let decl = self.prog.tensor(n).expect("declared tensor");
                let flat = flat_index(&decl.shape, &pos);
                Val::Scalar(self.d.load(self.tensors[n.as_str()][flat]))
            }
            ExprKind::Op(op, args) => {
                let vals: Vec<D::V> = args.iter().map(|a| self.scalar(a)).collect();
                Val::Scalar(self.d.op(*op, &vals))
            }
            ExprKind::Map { trip, var, body } => {
                let n = self.trip(trip);
                let mut out = Vec::with_capacity(n);
                for i in 0..n {
                    self.loops.push((var.clone(), i as i64));
                    self.scopes.push(HashMap::new());
                    for l in &body.lets {
                        let v = self.expr(&l.expr);
                        self.scopes.last_mut().expect("scope").insert(l.name.clone(), v);
                    }
                    out.push(self.scalar(&body.result));
                    self.scopes.pop();
                    self.loops.pop();
                }
                Val::Vector(out)
            }
            ExprKind::Reduce { input, combine } => {
                let CombineKind::Op(op) = combine.kind else { panic!("validated combine") };
                let Val::Vector(xs) = self.expr(input) else { panic!("validated reduce input") };
                Val::Scalar(self.d.reduce(op, &xs))
            }
        }
    }

    fn scalar(&mut self, e: &Expr) -> D::V {
        match self.expr(e) {
            Val::Scalar(s) => s,
            Val::Vector(_) => panic!("validated scalar expression"),
        }
    }
}

pub fn flat_index(shape: &[usize], pos: &[i64]) -> usize {
    shape.iter().zip(pos).fold(0usize, |acc, (&n, &p)| acc * n + p as usize)
}

/// Quantizes real tensors into their declared formats.
pub fn quantize_tensors(decls: &[&TensorDecl], real: &RealTensors) -> Tensors {
    decls
        .iter()
        .filter_map(|d| {
            real.get(&d.name)
                .map(|v| (d.name.clone(), v.iter().map(|&x| fixpoint::quantize(x, d.format)).collect()))
        })
        .collect()
}
