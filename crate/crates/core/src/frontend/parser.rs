use std::collections::HashMap;

use super::ast::*;
use super::lexer::{lex, Tok, Token};
use super::{ErrorKind, FrontendError};
use crate::fixpoint::{CombineOp, FixedFormat, LutFn, DEFAULT_LEAKY_SHIFT};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Sym {
    Tensor { rank: usize },
    Binding,
    LoopVar,
    Param,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    scopes: Vec<HashMap<String, Sym>>,
    /// Outputs declared but not yet bound.
    pending_outputs: HashMap<String, Span>,
}

pub fn parse_program(src: &str) -> Result<Program, FrontendError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0, scopes: vec![HashMap::new()], pending_outputs: HashMap::new() };
    p.program()
}

type PResult<T> = Result<T, FrontendError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: Tok) -> PResult<Span> {
        let span = self.span();
        if self.peek() == &t {
            self.bump();
            Ok(span)
        } else {
            Err(FrontendError::syntax(
                span,
                format!("expected {}, found {}", t.describe(), self.peek().describe()),
            ))
        }
    }

    fn ident(&mut self) -> PResult<(String, Span)> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok((s, span))
            }
            other => Err(FrontendError::syntax(span, format!("expected identifier, found {}", other.describe()))),
        }
    }

    fn keyword(&mut self, kw: &str) -> PResult<Span> {
        let (s, span) = self.ident()?;
        if s != kw {
            return Err(FrontendError::syntax(span, format!("expected `{kw}`, found `{s}`")));
        }
        Ok(span)
    }

    fn int(&mut self) -> PResult<u64> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Int(i) => {
                self.bump();
                Ok(i)
            }
            other => Err(FrontendError::syntax(span, format!("expected integer, found {}", other.describe()))),
        }
    }

    fn lookup(&self, name: &str) -> Option<Sym> {
        self.scopes.iter().rev().find_map(|s| s.get(name).copied())
    }

    fn declare(&mut self, name: &str, sym: Sym, span: Span) -> PResult<()> {
        if self.lookup(name).is_some() || self.pending_outputs.contains_key(name) {
            return Err(FrontendError::new(
                ErrorKind::Duplicate,
                span,
                format!("`{name}` is declared more than once"),
            ));
        }
        self.scopes.last_mut().expect("scope").insert(name.to_string(), sym);
        Ok(())
    }

    fn program(&mut self) -> PResult<Program> {
        let span = self.keyword("program")?;
        let (name, _) = self.ident()?;
        let precision = if self.eat(&Tok::Colon) { self.format()? } else { FixedFormat::FIX8 };
        self.expect(Tok::LBrace)?;
        let mut prog = Program {
            name,
            precision,
            inputs: Vec::new(),
            weights: Vec::new(),
            outputs: Vec::new(),
            body: Vec::new(),
            span,
        };
        while !matches!(self.peek(), Tok::RBrace | Tok::Eof) {
            self.item(&mut prog)?;
            while self.eat(&Tok::Semi) {}
        }
        self.expect(Tok::RBrace)?;
        if self.peek() != &Tok::Eof {
            return Err(FrontendError::syntax(self.span(), "trailing input after program"));
        }
        Ok(prog)
    }

    fn format(&mut self) -> PResult<FixedFormat> {
        let (s, span) = self.ident()?;
        let total = match s.as_str() {
            "fix8" => 8,
            "fix16" => 16,
            "fix32" => 32,
            _ => return Err(FrontendError::syntax(span, format!("unknown format `{s}`"))),
        };
        let frac = if self.eat(&Tok::Lt) {
            let f = self.int()?;
            self.expect(Tok::Gt)?;
            f
        } else {
            total as u64 / 2
        };
        FixedFormat::new(total, frac.min(255) as u8)
            .map_err(|e| FrontendError::syntax(span, e.to_string()))
    }

    fn decl(&mut self) -> PResult<TensorDecl> {
        let (name, span) = self.ident()?;
        self.expect(Tok::Colon)?;
        let format = self.format()?;
        self.expect(Tok::LBracket)?;
        let mut shape = vec![self.int()? as usize];
        while self.eat(&Tok::Comma) {
            shape.push(self.int()? as usize);
        }
        self.expect(Tok::RBracket)?;
        Ok(TensorDecl { name, shape, format, span })
    }

    fn item(&mut self, prog: &mut Program) -> PResult<()> {
        let span = self.span();
        let word = match self.peek() {
            Tok::Ident(s) => s.clone(),
            other => return Err(FrontendError::syntax(span, format!("expected declaration, found {}", other.describe()))),
        };
        match word.as_str() {
            "input" | "weight" | "output" if matches!(self.peek_at(1), Tok::Ident(_)) => {
                self.bump();
                let decl = self.decl()?;
                match word.as_str() {
                    "input" => {
                        self.declare(&decl.name, Sym::Tensor { rank: decl.shape.len() }, decl.span)?;
                        prog.inputs.push(decl);
                    }
                    "weight" => {
                        self.expect(Tok::Eq)?;
                        let (f, fspan) = self.ident()?;
                        if f != "load" && f != "loadModelFromFile" {
                            return Err(FrontendError::syntax(fspan, "expected `load(\"file\")`"));
                        }
                        self.expect(Tok::LParen)?;
                        let source = match self.bump().tok {
                            Tok::Str(s) => s,
                            _ => return Err(FrontendError::syntax(fspan, "expected a quoted file name")),
                        };
                        self.expect(Tok::RParen)?;
                        self.declare(&decl.name, Sym::Tensor { rank: decl.shape.len() }, decl.span)?;
                        prog.weights.push(WeightDecl { decl, source });
                    }
                    _ => {
                        if self.lookup(&decl.name).is_some() || self.pending_outputs.contains_key(&decl.name) {
                            return Err(FrontendError::new(
                                ErrorKind::Duplicate,
                                decl.span,
                                format!("`{}` is declared more than once", decl.name),
                            ));
                        }
                        self.pending_outputs.insert(decl.name.clone(), decl.span);
                        prog.outputs.push(decl);
                    }
                }
                Ok(())
            }
            _ => {
                let b = self.binding()?;
                prog.body.push(b);
                Ok(())
            }
        }
    }

    fn binding(&mut self) -> PResult<Binding> {
        let (name, span) = self.ident()?;
        self.expect(Tok::Eq)?;
        let expr = self.expr()?;
        if self.scopes.len() == 1 {
            self.pending_outputs.remove(&name);
        }
        self.declare(&name, Sym::Binding, span)?;
        Ok(Binding { name, expr, span })
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => ElemOp::Add,
                Tok::Minus => ElemOp::Sub,
                _ => return Ok(lhs),
            };
            let span = self.bump().span;
            let rhs = self.term()?;
            lhs = Expr::new(ExprKind::Op(op, vec![lhs, rhs]), span);
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while self.peek() == &Tok::Star {
            let span = self.bump().span;
            let rhs = self.unary()?;
            lhs = Expr::new(ExprKind::Op(ElemOp::Mul, vec![lhs, rhs]), span);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.peek() == &Tok::Minus {
            let span = self.bump().span;
            let inner = self.unary()?;
            return Ok(match inner.kind {
                ExprKind::Num(v) => Expr::new(ExprKind::Num(-v), span),
                _ => Expr::new(ExprKind::Op(ElemOp::Sub, vec![Expr::new(ExprKind::Num(0.0), span), inner]), span),
            });
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Int(i) => {
                self.bump();
                Ok(Expr::new(ExprKind::Num(i as f64), span))
            }
            Tok::Float(x) => {
                self.bump();
                Ok(Expr::new(ExprKind::Num(x), span))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                match (name.as_str(), self.peek()) {
                    ("Map", Tok::LParen) => self.map(span),
                    ("Reduce", Tok::LParen) => self.reduce(span),
                    (_, Tok::LParen) => self.call(&name, span),
                    (_, Tok::LBracket) => self.index(name, span),
                    _ => self.name(name, span),
                }
            }
            other => Err(FrontendError::syntax(span, format!("expected expression, found {}", other.describe()))),
        }
    }

    fn unknown(&self, name: &str, span: Span) -> FrontendError {
        FrontendError::new(ErrorKind::UnknownIdentifier, span, format!("unknown identifier `{name}`"))
    }

    fn name(&mut self, name: String, span: Span) -> PResult<Expr> {
        match self.lookup(&name) {
            None => Err(self.unknown(&name, span)),
            Some(Sym::LoopVar) => Err(FrontendError::syntax(
                span,
                format!("loop variable `{name}` can only appear in an index"),
            )),
            Some(_) => Ok(Expr::new(ExprKind::Name(name), span)),
        }
    }

    fn index(&mut self, name: String, span: Span) -> PResult<Expr> {
        match self.lookup(&name) {
            None => return Err(self.unknown(&name, span)),
            Some(Sym::LoopVar) | Some(Sym::Param) => {
                return Err(FrontendError::syntax(span, format!("`{name}` cannot be indexed")))
            }
            _ => {}
        }
        self.expect(Tok::LBracket)?;
        let mut idx = vec![self.index_expr()?];
        while self.eat(&Tok::Comma) {
            idx.push(self.index_expr()?);
        }
        self.expect(Tok::RBracket)?;
        Ok(Expr::new(ExprKind::Index(name, idx), span))
    }

    fn index_term(&mut self, sign: i64, ix: &mut IndexExpr) -> PResult<()> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                if self.eat(&Tok::Star) {
                    let (v, vspan) = self.ident()?;
                    self.loop_var(&v, vspan)?;
                    ix.terms.push((sign * n as i64, v));
                } else {
                    ix.offset += sign * n as i64;
                }
                Ok(())
            }
            Tok::Ident(v) => {
                self.bump();
                self.loop_var(&v, span)?;
                ix.terms.push((sign, v));
                Ok(())
            }
            other => Err(FrontendError::syntax(
                span,
                format!("index must be an affine sum of loop variables, found {}", other.describe()),
            )),
        }
    }

    fn loop_var(&self, v: &str, span: Span) -> PResult<()> {
        match self.lookup(v) {
            Some(Sym::LoopVar) => Ok(()),
            None => Err(self.unknown(v, span)),
            Some(_) => Err(FrontendError::syntax(span, format!("`{v}` is not a loop variable"))),
        }
    }

    fn index_expr(&mut self) -> PResult<IndexExpr> {
        let mut ix = IndexExpr { terms: Vec::new(), offset: 0 };
        let first_sign = if self.eat(&Tok::Minus) { -1 } else { 1 };
        self.index_term(first_sign, &mut ix)?;
        loop {
            let sign = match self.peek() {
                Tok::Plus => 1,
                Tok::Minus => -1,
                _ => return Ok(ix),
            };
            self.bump();
            self.index_term(sign, &mut ix)?;
        }
    }

    fn args(&mut self) -> PResult<Vec<Expr>> {
        self.expect(Tok::LParen)?;
        let mut args = Vec::new();
        if self.peek() != &Tok::RParen {
            args.push(self.expr()?);
            while self.eat(&Tok::Comma) {
                args.push(self.expr()?);
            }
        }
        self.expect(Tok::RParen)?;
        Ok(args)
    }

    fn call(&mut self, name: &str, span: Span) -> PResult<Expr> {
        if name == "lut" {
            self.expect(Tok::LParen)?;
            let (f, fspan) = self.ident()?;
            let func = LutFn::from_name(&f).ok_or_else(|| {
                FrontendError::new(ErrorKind::UnknownOperator, fspan, format!("unknown lookup table `{f}`"))
            })?;
            self.expect(Tok::Comma)?;
            let arg = self.expr()?;
            self.expect(Tok::RParen)?;
            return Ok(Expr::new(ExprKind::Op(ElemOp::Lut(func), vec![arg]), span));
        }
        let op = match name {
            "relu" => ElemOp::Relu,
            "leaky_relu" => ElemOp::LeakyRelu { shift: DEFAULT_LEAKY_SHIFT },
            "max" => ElemOp::Max,
            "min" => ElemOp::Min,
            "select" => ElemOp::Select,
            "add" => ElemOp::Add,
            "sub" => ElemOp::Sub,
            "mul" => ElemOp::Mul,
            _ => {
                return Err(FrontendError::new(
                    ErrorKind::UnknownOperator,
                    span,
                    format!("unknown operator `{name}`"),
                ))
            }
        };
        let mut args = self.args()?;
        let op = match op {
            ElemOp::LeakyRelu { .. } if args.len() == 2 => {
                let slope = args.pop().expect("two args");
                let shift = match slope.kind {
                    ExprKind::Num(s) if s > 0.0 && s <= 1.0 && (1.0 / s).log2().fract() == 0.0 => {
                        (1.0 / s).log2() as u32
                    }
                    _ => return Err(FrontendError::syntax(slope.span, "leaky_relu slope must be a power of two literal ≤ 1")),
                };
                ElemOp::LeakyRelu { shift }
            }
            other => other,
        };
        if args.len() != op.arity() {
            return Err(FrontendError::syntax(
                span,
                format!("`{name}` takes {} argument(s), found {}", op.arity(), args.len()),
            ));
        }
        Ok(Expr::new(ExprKind::Op(op, args), span))
    }

    fn trip(&mut self) -> PResult<Trip> {
        let span = self.span();
        let trip = match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Trip::Lit(n as usize)
            }
            Tok::Ident(s) if s == "sizeof" => {
                self.bump();
                self.expect(Tok::LParen)?;
                let (name, nspan) = self.ident()?;
                match self.lookup(&name) {
                    None => return Err(self.unknown(&name, nspan)),
                    Some(Sym::Tensor { .. }) | Some(Sym::Binding) => {}
                    Some(_) => return Err(FrontendError::new(ErrorKind::NonConstantTrip, nspan, "non-constant trip count")),
                }
                let dim = if self.eat(&Tok::LBracket) {
                    let d = self.int()? as usize;
                    self.expect(Tok::RBracket)?;
                    d
                } else {
                    0
                };
                self.expect(Tok::RParen)?;
                Trip::SizeOf { name, dim }
            }
            _ => return Err(FrontendError::new(ErrorKind::NonConstantTrip, span, "non-constant trip count")),
        };
        if self.peek() != &Tok::RParen {
            return Err(FrontendError::new(ErrorKind::NonConstantTrip, self.span(), "non-constant trip count"));
        }
        Ok(trip)
    }

    fn map(&mut self, span: Span) -> PResult<Expr> {
        self.expect(Tok::LParen)?;
        let trip = self.trip()?;
        self.expect(Tok::RParen)?;
        self.expect(Tok::LBrace)?;
        let (var, vspan) = self.ident()?;
        self.expect(Tok::Arrow)?;
        self.scopes.push(HashMap::new());
        let res = self.declare(&var, Sym::LoopVar, vspan).and_then(|_| self.block());
        self.scopes.pop();
        let body = res?;
        self.expect(Tok::RBrace)?;
        Ok(Expr::new(ExprKind::Map { trip, var, body }, span))
    }

    fn block(&mut self) -> PResult<Block> {
        let mut lets = Vec::new();
        loop {
            while self.eat(&Tok::Semi) {}
            if matches!(self.peek(), Tok::Ident(_)) && self.peek_at(1) == &Tok::Eq {
                lets.push(self.binding()?);
            } else {
                break;
            }
        }
        let result = Box::new(self.expr()?);
        while self.eat(&Tok::Semi) {}
        Ok(Block { lets, result })
    }

    fn reduce(&mut self, span: Span) -> PResult<Expr> {
        self.expect(Tok::LParen)?;
        let input = Box::new(self.expr()?);
        self.expect(Tok::RParen)?;
        self.expect(Tok::LBrace)?;
        self.expect(Tok::LParen)?;
        let (a, aspan) = self.ident()?;
        self.expect(Tok::Comma)?;
        let (b, bspan) = self.ident()?;
        self.expect(Tok::RParen)?;
        self.expect(Tok::Arrow)?;
        self.scopes.push(HashMap::new());
        let res = self
            .declare(&a, Sym::Param, aspan)
            .and_then(|_| self.declare(&b, Sym::Param, bspan))
            .and_then(|_| self.expr());
        self.scopes.pop();
        let body = res?;
        self.expect(Tok::RBrace)?;
        let kind = combine_kind(&body, &a, &b)
            .ok_or_else(|| FrontendError::syntax(body.span, "combine must be `x + y`, `x * y`, `max(x, y)`, `min(x, y)` over its two parameters"))?;
        Ok(Expr::new(ExprKind::Reduce { input, combine: Combine { params: (a, b), kind } }, span))
    }
}

fn combine_kind(body: &Expr, a: &str, b: &str) -> Option<CombineKind> {
    let ExprKind::Op(op, args) = &body.kind else { return None };
    let names: Vec<&str> = args
        .iter()
        .filter_map(|e| match &e.kind {
            ExprKind::Name(n) => Some(n.as_str()),
            _ => None,
        })
        .collect();
    let uses_both = names.len() == 2 && ((names[0] == a && names[1] == b) || (names[0] == b && names[1] == a));
    if !uses_both {
        return None;
    }
    Some(match op {
        ElemOp::Add => CombineKind::Op(CombineOp::Add),
        ElemOp::Mul => CombineKind::Op(CombineOp::Mul),
        ElemOp::Max => CombineKind::Op(CombineOp::Max),
        ElemOp::Min => CombineKind::Op(CombineOp::Min),
        ElemOp::Sub => CombineKind::Sub,
        _ => return None,
    })
}
