use serde::{Deserialize, Serialize};

use crate::fixpoint::{CombineOp, FixedFormat, LutFn};

/// Source position, 1-based.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl std::fmt::Display for Span {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TensorDecl {
    pub name: String,
    pub shape: Vec<usize>,
    pub format: FixedFormat,
    pub span: Span,
}

impl TensorDecl {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightDecl {
    pub decl: TensorDecl,
    pub source: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Program {
    pub name: String,
    /// Format every intermediate value is computed in.
    pub precision: FixedFormat,
    pub inputs: Vec<TensorDecl>,
    pub weights: Vec<WeightDecl>,
    pub outputs: Vec<TensorDecl>,
    pub body: Vec<Binding>,
    pub span: Span,
}

impl Program {
    pub fn input(&self, name: &str) -> Option<&TensorDecl> {
        self.inputs.iter().find(|d| d.name == name)
    }

    pub fn weight(&self, name: &str) -> Option<&WeightDecl> {
        self.weights.iter().find(|w| w.decl.name == name)
    }

    pub fn output(&self, name: &str) -> Option<&TensorDecl> {
        self.outputs.iter().find(|d| d.name == name)
    }

    /// Input or weight declaration.
    pub fn tensor(&self, name: &str) -> Option<&TensorDecl> {
        self.input(name).or_else(|| self.weight(name).map(|w| &w.decl))
    }

    pub fn input_arity(&self) -> usize {
        self.inputs.iter().map(TensorDecl::len).sum()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Binding {
    pub name: String,
    pub expr: Expr,
    pub span: Span,
}

#[derive(Debug, Clone, Serialize)]
pub struct Block {
    pub lets: Vec<Binding>,
    pub result: Box<Expr>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Self {
        Expr { kind, span }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Trip {
    Lit(usize),
    SizeOf { name: String, dim: usize },
}

/// Affine index: `sum(coef * var) + offset`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IndexExpr {
    pub terms: Vec<(i64, String)>,
    pub offset: i64,
}

impl IndexExpr {
    pub fn constant(offset: i64) -> Self {
        IndexExpr { terms: Vec::new(), offset }
    }

    pub fn var(name: &str) -> Self {
        IndexExpr { terms: vec![(1, name.to_string())], offset: 0 }
    }

    pub fn eval(&self, lookup: impl Fn(&str) -> i64) -> i64 {
        self.terms.iter().map(|(c, v)| c * lookup(v)).sum::<i64>() + self.offset
    }
}

/// The closed set of element-wise operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ElemOp {
    Add,
    Sub,
    Mul,
    Max,
    Min,
    Select,
    Relu,
    LeakyRelu { shift: u32 },
    Lut(LutFn),
}

impl ElemOp {
    pub fn arity(self) -> usize {
        match self {
            ElemOp::Add | ElemOp::Sub | ElemOp::Mul | ElemOp::Max | ElemOp::Min => 2,
            ElemOp::Select => 3,
            ElemOp::Relu | ElemOp::LeakyRelu { .. } | ElemOp::Lut(_) => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ElemOp::Add => "add",
            ElemOp::Sub => "sub",
            ElemOp::Mul => "mul",
            ElemOp::Max => "max",
            ElemOp::Min => "min",
            ElemOp::Select => "select",
            ElemOp::Relu => "relu",
            ElemOp::LeakyRelu { .. } => "leaky_relu",
            ElemOp::Lut(_) => "lut_lookup",
        }
    }
}

/// Combine operator as written; `Sub` parses but never validates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CombineKind {
    Op(CombineOp),
    Sub,
}

#[derive(Debug, Clone, Serialize)]
pub struct Combine {
    pub params: (String, String),
    pub kind: CombineKind,
}

#[derive(Debug, Clone, Serialize)]
pub enum ExprKind {
    Num(f64),
    /// A whole vector or scalar binding, or a one-dimensional tensor.
    Name(String),
    Index(String, Vec<IndexExpr>),
    Op(ElemOp, Vec<Expr>),
    Map { trip: Trip, var: String, body: Block },
    Reduce { input: Box<Expr>, combine: Combine },
}

impl ExprKind {
    pub fn has_loops(&self) -> bool {
        match self {
            ExprKind::Map { .. } | ExprKind::Reduce { .. } => true,
            ExprKind::Op(_, args) => args.iter().any(|a| a.kind.has_loops()),
            _ => false,
        }
    }
}

/// Structural equality, ignoring spans.
pub trait SameShape {
    fn same(&self, other: &Self) -> bool;
}

impl SameShape for Expr {
    fn same(&self, other: &Self) -> bool {
        use ExprKind::*;
        match (&self.kind, &other.kind) {
            (Num(a), Num(b)) => a == b,
            (Name(a), Name(b)) => a == b,
            (Index(a, ia), Index(b, ib)) => a == b && ia == ib,
            (Op(a, xa), Op(b, xb)) => a == b && xa.same(xb),
            (Map { trip: ta, var: va, body: ba }, Map { trip: tb, var: vb, body: bb }) => {
                ta == tb && va == vb && ba.same(bb)
            }
            (Reduce { input: ia, combine: ca }, Reduce { input: ib, combine: cb }) => {
                ia.same(ib) && ca.params == cb.params && ca.kind == cb.kind
            }
            _ => false,
        }
    }
}

impl SameShape for Block {
    fn same(&self, other: &Self) -> bool {
        self.lets.same(&other.lets) && self.result.same(&other.result)
    }
}

impl SameShape for Binding {
    fn same(&self, other: &Self) -> bool {
        self.name == other.name && self.expr.same(&other.expr)
    }
}

impl<T: SameShape> SameShape for Vec<T> {
    fn same(&self, other: &Self) -> bool {
        self.len() == other.len() && self.iter().zip(other).all(|(a, b)| a.same(b))
    }
}

impl SameShape for TensorDecl {
    fn same(&self, other: &Self) -> bool {
        self.name == other.name && self.shape == other.shape && self.format == other.format
    }
}

impl SameShape for WeightDecl {
    fn same(&self, other: &Self) -> bool {
        self.decl.same(&other.decl) && self.source == other.source
    }
}

impl SameShape for Program {
    fn same(&self, other: &Self) -> bool {
        self.name == other.name
            && self.precision == other.precision
            && self.inputs.same(&other.inputs)
            && self.weights.same(&other.weights)
            && self.outputs.same(&other.outputs)
            && self.body.same(&other.body)
    }
}
