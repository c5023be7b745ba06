//! Source printer. Output re-parses to a structurally identical program.

use std::fmt::Write;

use super::ast::*;
use crate::fixpoint::CombineOp;

pub fn pretty(p: &Program) -> String {
    let mut out = String::new();
    if p.precision == crate::fixpoint::FixedFormat::FIX8 {
        let _ = writeln!(out, "program {} {{", p.name);
    } else {
        let _ = writeln!(out, "program {} : {} {{", p.name, p.precision);
    }
    for d in &p.inputs {
        let _ = writeln!(out, "  input {};", decl(d));
    }
    for w in &p.weights {
        let _ = writeln!(out, "  weight {} = load(\"{}\");", decl(&w.decl), w.source);
    }
    for d in &p.outputs {
        let _ = writeln!(out, "  output {};", decl(d));
    }
    for b in &p.body {
        let _ = writeln!(out, "  {} = {};", b.name, expr(&b.expr));
    }
    out.push_str("}\n");
    out
}

fn decl(d: &TensorDecl) -> String {
    let dims: Vec<String> = d.shape.iter().map(|n| n.to_string()).collect();
    format!("{} : {}[{}]", d.name, d.format, dims.join(", "))
}

fn num(x: f64) -> String {
    if x < 0.0 || (x == 0.0 && x.is_sign_negative()) {
        format!("({x})")
    } else {
        format!("{x}")
    }
}

pub fn index(ix: &IndexExpr) -> String {
    let mut s = String::new();
    for (k, (c, v)) in ix.terms.iter().enumerate() {
        let (sign, mag) = if *c < 0 { ("-", -c) } else { ("+", *c) };
        if k == 0 {
            if sign == "-" {
                s.push('-');
            }
        } else {
            let _ = write!(s, " {sign} ");
        }
        if mag == 1 {
            s.push_str(v);
        } else {
            let _ = write!(s, "{mag} * {v}");
        }
    }
    if ix.terms.is_empty() {
        let _ = write!(s, "{}", ix.offset);
    } else if ix.offset > 0 {
        let _ = write!(s, " + {}", ix.offset);
    } else if ix.offset < 0 {
        let _ = write!(s, " - {}", -ix.offset);
    }
    s
}

fn trip(t: &Trip) -> String {
    match t {
        Trip::Lit(n) => n.to_string(),
        Trip::SizeOf { name, dim: 0 } => format!("sizeof({name})"),
        Trip::SizeOf { name, dim } => format!("sizeof({name}[{dim}])"),
    }
}

pub fn expr(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Num(x) => num(*x),
        ExprKind::Name(n) => n.clone(),
        ExprKind::Index(n, idx) => {
            let parts: Vec<String> = idx.iter().map(index).collect();
            format!("{n}[{}]", parts.join(", "))
        }
        ExprKind::Op(op, args) => {
            let a: Vec<String> = args.iter().map(expr).collect();
            match op {
                ElemOp::Add => format!("({} + {})", a[0], a[1]),
                ElemOp::Sub => format!("({} - {})", a[0], a[1]),
                ElemOp::Mul => format!("({} * {})", a[0], a[1]),
                ElemOp::LeakyRelu { shift } => {
                    format!("leaky_relu({}, {})", a[0], 1.0 / (1u64 << shift) as f64)
                }
                ElemOp::Lut(f) => format!("lut({}, {})", f.name(), a[0]),
                other => format!("{}({})", other.name(), a.join(", ")),
            }
        }
        ExprKind::Map { trip: t, var, body } => {
            let mut s = format!("Map({}) {{ {var} => ", trip(t));
            for b in &body.lets {
                let _ = write!(s, "{} = {}; ", b.name, expr(&b.expr));
            }
            let _ = write!(s, "{} }}", expr(&body.result));
            s
        }
        ExprKind::Reduce { input, combine } => {
            let (x, y) = &combine.params;
            let body = match combine.kind {
                CombineKind::Op(CombineOp::Add) => format!("{x} + {y}"),
                CombineKind::Op(CombineOp::Mul) => format!("{x} * {y}"),
                CombineKind::Op(CombineOp::Max) => format!("max({x}, {y})"),
                CombineKind::Op(CombineOp::Min) => format!("min({x}, {y})"),
                CombineKind::Sub => format!("{x} - {y}"),
            };
            format!("Reduce({}) {{ ({x}, {y}) => {body} }}", expr(input))
        }
    }
}
