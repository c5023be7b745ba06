//! Grid fabric model: configuration, cost model and cycle simulator.

pub mod config;
pub mod cost;
pub mod sim;

use thiserror::Error;

pub use config::FabricConfig;
pub use sim::{execute, FabricSim, FabricState, SimError};
pub use cost::{cu_area, fabric_cost, fu_area, fu_power, Cost, CostModel};

use crate::fixpoint::FixedFormat;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FabricError {
    #[error("bad fabric configuration: {0}")]
    Config(String),
    #[error("unsupported precision {0}")]
    UnsupportedPrecision(FixedFormat),
    #[error("usage exceeds grid: {cus} compute units (of {cu_slots}), {mus} memory units (of {mu_slots})")]
    UsageExceedsGrid { cus: usize, mus: usize, cu_slots: usize, mu_slots: usize },
}
