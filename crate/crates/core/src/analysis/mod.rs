//! Motivating traffic studies and suite report tables.

pub mod report;
pub mod traffic;

use std::fmt::Write as _;

use thiserror::Error;

pub use report::{report_tables, BenchRow, Tables, UnrollRow};
pub use traffic::{cache_miss_rate, fct_compare, fct_ratio, Device, FlowFct, FlowModel, FlowSizeDist, LatencyConstants, Scheme};

pub const CSV_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error(transparent)]
    Model(#[from] crate::models::ModelError),
    #[error(transparent)]
    Compile(#[from] crate::compiler::CompileError),
    #[error(transparent)]
    Fabric(#[from] crate::fabric::FabricError),
}

/// One point of a plot-ready series.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub series: String,
}

/// `x,y,series` rows behind a `#`-prefixed header line.
pub fn to_csv(header: &str, points: &[Point]) -> String {
    let mut s = format!("# v{CSV_VERSION} {header}\nx,y,series\n");
    for p in points {
        let _ = writeln!(s, "{},{},{}", p.x, p.y, p.series);
    }
    s
}

/// Miss rate against the number of unstable fields, one series per entropy.
pub fn cache_sweep(base: &FlowModel, fields: &[usize], entropies: &[u32]) -> Result<Vec<Point>, AnalysisError> {
    let mut out = Vec::new();
    for &e in entropies {
        for &f in fields {
            let fm = FlowModel { unstable_fields: f, field_entropy_bits: e, ..base.clone() };
            out.push(Point { x: f as f64, y: cache_miss_rate(&fm)?, series: format!("entropy_{e}") });
        }
    }
    Ok(out)
}

/// Completion time of both schemes against flow length.
pub fn fct_sweep(base: &FlowModel, lc: &LatencyConstants, lengths: &[u64]) -> Result<Vec<Point>, AnalysisError> {
    let mut out = Vec::new();
    for &n in lengths {
        let fm = FlowModel { flow_size_dist: FlowSizeDist::Fixed { packets: n }, ..base.clone() };
        for scheme in [Scheme::Caching, Scheme::Dataplane] {
            let v = fct_compare(&fm, lc, scheme)?;
            let mean = v.iter().map(|f| f.fct_ms).sum::<f64>() / v.len().max(1) as f64;
            let series = match scheme {
                Scheme::Caching => "caching_ms",
                Scheme::Dataplane => "dataplane_ms",
            };
            out.push(Point { x: n as f64, y: mean, series: series.into() });
        }
        out.push(Point { x: n as f64, y: fct_ratio(&fm, lc, n)?, series: "ratio".into() });
    }
    Ok(out)
}
