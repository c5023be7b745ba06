//! DSL front end: lexing, parsing, validation and the reference interpreter.

pub mod ast;
pub mod interp;
pub mod lexer;
pub mod parser;
pub mod pretty;
pub mod validate;

use thiserror::Error;

pub use ast::{Program, Span};
pub use interp::{interpret, interpret_real, Tensors};
pub use parser::parse_program;
pub use pretty::pretty;
pub use validate::{validate, validate_with, Pattern, PatternKind, Ty, TypedProgram};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Syntax,
    UnknownIdentifier,
    UnknownOperator,
    NonConstantTrip,
    Duplicate,
    ShapeMismatch,
    EmptyExtent,
    EmptyReduce,
    NonAssociative,
    IndexOutOfBounds,
    NestingDepth,
    Unassigned,
    Capacity,
}

#[derive(Debug, Clone, Error)]
#[error("{span}: {message}")]
pub struct FrontendError {
    pub kind: ErrorKind,
    pub span: Span,
    pub message: String,
}

impl FrontendError {
    pub fn new(kind: ErrorKind, span: Span, message: impl Into<String>) -> Self {
        FrontendError { kind, span, message: message.into() }
    }

    pub fn syntax(span: Span, message: impl Into<String>) -> Self {
        FrontendError::new(ErrorKind::Syntax, span, message)
    }

    /// `file:line:col: message`, the diagnostic format on standard error.
    pub fn render(&self, file: &str) -> String {
        format!("{file}:{}:{}: {}", self.span.line, self.span.col, self.message)
    }
}

/// Parses and validates with default limits.
pub fn load_program(src: &str) -> Result<TypedProgram, FrontendError> {
    validate(parse_program(src)?)
}
