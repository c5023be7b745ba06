//! A software model of an ML-capable switch data plane.
//!
//! Map-reduce programs written in a small DSL are compiled onto a grid of
//! compute and memory units, executed bit-exactly in fixed point, and
//! embedded in a match-action pipeline with safety guards.

pub mod fixpoint;
pub mod analysis;
pub mod cli;
pub mod compiler;
pub mod datapath;
pub mod fabric;
pub mod frontend;
pub mod models;
