//! Per-packet switch pipeline: parse, preprocess, infer, guard, schedule.

pub mod guard;
pub mod mat;
pub mod packet;
pub mod pifo;
pub mod pipeline;

use thiserror::Error;

pub use guard::{guard_acl, guard_hysteresis, AclRule, FlowGuard, GuardConfig, Verdict};
pub use mat::{mat_apply, Action, KeyPattern, MatTable, MatchKind};
pub use packet::{parse, read_trace, synthetic_trace, write_trace, PacketRecord, Phv, PhvLayout};
pub use pifo::{PifoQueue, Scheduler};
pub use pipeline::{infer, run_pipeline, Decision, Model, PipelineConfig, PipelineResult, Stats};

#[derive(Debug, Error)]
pub enum DatapathError {
    #[error("missing header field `{0}`")]
    MissingField(String),
    #[error("feature slice has {got} values, model expects {expected}")]
    Arity { expected: usize, got: usize },
    #[error("bandwidth floors are infeasible (total {0})")]
    InfeasibleFloor(f64),
    #[error("bad table: {0}")]
    Table(String),
    #[error("trace line {line}: {message}")]
    Trace { line: usize, message: String },
    #[error("model has no output `{0}`")]
    Output(String),
    #[error(transparent)]
    Sim(#[from] crate::fabric::SimError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
