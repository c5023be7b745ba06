//! Resource and performance tables for the benchmark suite.

use std::fmt::Write as _;

use serde::Serialize;

use super::AnalysisError;
use crate::compiler::{compile, estimate, PerfReport};
use crate::fabric::{CostModel, FabricConfig};
use crate::fixpoint::FixedFormat;
use crate::frontend::load_program;
use crate::models::{activations, BenchmarkSpec, Category, ModelError};

pub const TABLES_VERSION: u32 = 1;

/// Unroll sweeps with the published fraction of line rate at each factor.
pub const UNROLL_SWEEPS: [(&str, &[(usize, f64)]); 3] = [
    ("Conv1D", &[(1, 0.125), (2, 0.25), (4, 0.5), (8, 1.0)]),
    ("SVMLin", &[(1, 0.5), (2, 1.0)]),
    ("Percept", &[(1, 1.0)]),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FuRow {
    pub precision: String,
    pub area_um2: f64,
    pub power_uw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub name: String,
    pub category: Category,
    pub report: PerfReport,
    pub target_latency_ns: f64,
    pub latency_dev: f64,
    pub latency_ok: bool,
    pub target_area_mm2: f64,
    pub area_dev: f64,
    pub area_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnrollRow {
    pub name: String,
    pub unroll: usize,
    pub line_rate: f64,
    pub target_line_rate: f64,
    pub ok: bool,
    pub area_mm2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRow {
    pub name: String,
    pub stages: usize,
    pub cus: usize,
    pub area_mm2: f64,
    pub line_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tables {
    pub version: u32,
    pub functional_units: Vec<FuRow>,
    pub applications: Vec<BenchRow>,
    pub micro: Vec<BenchRow>,
    pub unroll: Vec<UnrollRow>,
    /// Area never shrinks as the unroll factor grows, per benchmark.
    pub area_monotone: Vec<(String, bool)>,
    pub stage_sweep: Vec<StageRow>,
}

impl Tables {
    pub fn all_ok(&self) -> bool {
        self.applications.iter().chain(&self.micro).all(|r| r.latency_ok && r.area_ok)
            && self.unroll.iter().all(|r| r.ok)
            && self.area_monotone.iter().all(|(_, ok)| *ok)
    }

    /// Mean latency and area overhead of the application rows.
    pub fn application_means(&self) -> Option<(f64, f64)> {
        let n = self.applications.len();
        (n > 0).then(|| {
            let lat = self.applications.iter().map(|r| r.report.latency_ns).sum::<f64>() / n as f64;
            let area = self.applications.iter().map(|r| r.report.area_overhead_pct).sum::<f64>() / n as f64;
            (lat, area)
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tables serialize")
    }

    pub fn to_text(&self) -> String {
        let flag = |ok: bool| if ok { "ok" } else { "DEVIATES" };
        let mut s = format!("# tables v{}\n", self.version);
        if !self.functional_units.is_empty() {
            s.push_str("\n## functional units\nprecision  area_um2  power_uw\n");
            for r in &self.functional_units {
                let _ = writeln!(s, "{:<10} {:>9} {:>9}", r.precision, r.area_um2, r.power_uw);
            }
        }
        for (title, rows) in [("applications", &self.applications), ("microbenchmarks", &self.micro)] {
            if rows.is_empty() {
                continue;
            }
            let _ = writeln!(s, "\n## {title}\nname        lat_ns  target     dev  area_mm2  target     dev   ii  cus  mus  area_ovh%  power_ovh%");
            for r in rows {
                let p = &r.report;
                let _ = writeln!(
                    s,
                    "{:<10} {:>7.0} {:>7.0} {:>+6.1}% {:>9.2} {:>7.2} {:>+6.1}% {:>3} {:>4} {:>4} {:>9.2} {:>10.2} {}",
                    r.name,
                    p.latency_ns,
                    r.target_latency_ns,
                    100.0 * r.latency_dev,
                    p.area_mm2,
                    r.target_area_mm2,
                    100.0 * r.area_dev,
                    p.ii,
                    p.cus,
                    p.mus,
                    p.area_overhead_pct,
                    p.power_overhead_pct,
                    flag(r.latency_ok && r.area_ok)
                );
            }
        }
        if let Some((lat, area)) = self.application_means() {
            let _ = writeln!(s, "mean application latency {lat:.1} ns, area overhead {area:.2}%");
        }
        if !self.unroll.is_empty() {
            s.push_str("\n## unroll\nname       U  line_rate  target  area_mm2\n");
            for r in &self.unroll {
                let _ = writeln!(
                    s,
                    "{:<9} {:>2} {:>10.3} {:>7.3} {:>9.2} {}",
                    r.name, r.unroll, r.line_rate, r.target_line_rate, r.area_mm2, flag(r.ok)
                );
            }
            for (n, ok) in &self.area_monotone {
                let _ = writeln!(s, "{n} area monotone in U: {}", flag(*ok));
            }
        }
        if !self.stage_sweep.is_empty() {
            s.push_str("\n## activation area by CU stages\nname        stages  cus  area_mm2  line_rate\n");
            for r in &self.stage_sweep {
                let _ = writeln!(s, "{:<11} {:>6} {:>4} {:>9.2} {:>10.2}", r.name, r.stages, r.cus, r.area_mm2, r.line_rate);
            }
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("table,name,unroll,latency_ns,target_latency_ns,area_mm2,target_area_mm2,line_rate,target_line_rate,ok\n");
        for (t, rows) in [("applications", &self.applications), ("micro", &self.micro)] {
            for r in rows {
                let p = &r.report;
                let _ = writeln!(
                    s,
                    "{t},{},,{},{},{},{},{},,{}",
                    r.name,
                    p.latency_ns,
                    r.target_latency_ns,
                    p.area_mm2,
                    r.target_area_mm2,
                    p.line_rate,
                    r.latency_ok && r.area_ok
                );
            }
        }
        for r in &self.unroll {
            let _ = writeln!(s, "unroll,{},{},,,{},,{},{},{}", r.name, r.unroll, r.area_mm2, r.line_rate, r.target_line_rate, r.ok);
        }
        s
    }
}

fn rel(got: f64, want: f64) -> f64 {
    (got - want) / want
}

pub fn bench_row(b: &BenchmarkSpec, cfg: &FabricConfig, cost: &CostModel) -> Result<BenchRow, AnalysisError> {
    let tp = b.program()?;
    let m = compile(&tp, cfg, b.unroll)?;
    let report = estimate(&m, cost)?;
    let t = b.targets;
    let latency_dev = rel(report.latency_ns, t.latency_ns);
    let area_dev = rel(report.area_mm2, t.area_mm2);
    Ok(BenchRow {
        name: b.name.to_string(),
        category: b.category,
        target_latency_ns: t.latency_ns,
        latency_ok: latency_dev.abs() <= b.latency_tol,
        target_area_mm2: t.area_mm2,
        area_ok: area_dev.abs() <= b.area_tol,
        latency_dev,
        area_dev,
        report,
    })
}

/// Compiles every benchmark in `suite` and compares it with its targets.
pub fn report_tables(suite: &[BenchmarkSpec], cfg: &FabricConfig, cost: &CostModel) -> Result<Tables, AnalysisError> {
    let mut t = Tables {
        version: TABLES_VERSION,
        functional_units: Vec::new(),
        applications: Vec::new(),
        micro: Vec::new(),
        unroll: Vec::new(),
        area_monotone: Vec::new(),
        stage_sweep: Vec::new(),
    };
    if suite.is_empty() {
        return Ok(t);
    }
    for p in [FixedFormat::FIX8, FixedFormat::FIX16, FixedFormat::FIX32] {
        t.functional_units.push(FuRow { precision: p.to_string(), area_um2: cost.fu_area(p)?, power_uw: cost.fu_power(p)? });
    }
    for b in suite {
        let row = bench_row(b, cfg, cost)?;
        match b.category {
            Category::Application => t.applications.push(row),
            Category::Micro => t.micro.push(row),
        }
    }
    for (name, sweep) in UNROLL_SWEEPS {
        let Some(b) = suite.iter().find(|b| b.name == name) else { continue };
        let tp = b.program()?;
        let mut areas = Vec::new();
        for &(u, target) in sweep {
            let r = estimate(&compile(&tp, cfg, Some(u))?, cost)?;
            areas.push(r.area_mm2);
            t.unroll.push(UnrollRow {
                name: name.to_string(),
                unroll: u,
                line_rate: r.line_rate,
                target_line_rate: target,
                ok: r.line_rate == target,
                area_mm2: r.area_mm2,
            });
        }
        t.area_monotone.push((name.to_string(), areas.windows(2).all(|w| w[0] <= w[1])));
    }
    t.stage_sweep = stage_sweep(cfg, cost, 2..=6)?;
    Ok(t)
}

/// Area of each activation kernel as the CU stage count varies.
pub fn stage_sweep(
    cfg: &FabricConfig,
    cost: &CostModel,
    stages: std::ops::RangeInclusive<usize>,
) -> Result<Vec<StageRow>, AnalysisError> {
    let mut out = Vec::new();
    for a in activations() {
        let tp = load_program(a.source).map_err(ModelError::from)?;
        for s in stages.clone() {
            let c = FabricConfig { stages: s, ..cfg.clone() };
            let r = estimate(&compile(&tp, &c, None)?, cost)?;
            let line_rate = if a.half_rate { r.line_rate.min(0.5) } else { r.line_rate };
            out.push(StageRow { name: a.name.to_string(), stages: s, cus: r.cus, area_mm2: r.area_mm2, line_rate });
        }
    }
    Ok(out)
}
