//! Compilation of programs to fabric mappings.

pub mod estimate;
pub mod graph;
pub mod lower;
pub mod place;
pub mod split;

use thiserror::Error;

pub use estimate::{estimate, PerfReport};
pub use graph::Graph;
pub use lower::lower;
pub use place::{place_and_route, Mapping};
pub use split::{split, unroll};

use crate::fabric::{FabricConfig, FabricError};
use crate::frontend::TypedProgram;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompileError {
    #[error("unroll factor must be positive")]
    Unroll,
    #[error(transparent)]
    Fabric(#[from] FabricError),
    #[error("cannot route {from:?} -> {to:?}: interconnect congested")]
    Unroutable { from: place::Pos, to: place::Pos },
    #[error("malformed mapping: {0}")]
    Format(String),
    #[error("internal compiler error: {0}")]
    Internal(String),
}

/// Lowers, splits, unrolls by `u` (full when `None`) and places.
pub fn compile(tp: &TypedProgram, cfg: &FabricConfig, u: Option<usize>) -> Result<Mapping, CompileError> {
    let g = split(lower(tp)?, cfg)?;
    let g = match u {
        Some(u) => unroll(g, u)?,
        None => g,
    };
    place_and_route(&g, cfg)
}
