//! Compiles the whole benchmark suite and prints the resource tables.
//!
//! cargo run --release --example suite_tables

use inswitch::analysis::report_tables;
use inswitch::fabric::{CostModel, FabricConfig};
use inswitch::models::build_suite;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let t = report_tables(&build_suite(), &FabricConfig::default(), &CostModel::default())?;
    print!("{}", t.to_text());
    println!("all within tolerance: {}", t.all_ok());
    Ok(())
}
