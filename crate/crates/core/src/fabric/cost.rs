use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{FabricConfig, FabricError};
use crate::fixpoint::FixedFormat;

const DEFAULT_TABLE: &str = include_str!("../../data/cost_model.toml");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuEntry {
    pub area_um2: f64,
    pub power_uw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overhead {
    pub mu_area_mm2: f64,
    pub link_area_mm2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub area_mm2: f64,
    pub pipelines: u32,
    pub power_per_pipeline_w: f64,
}

/// Per-FU calibration table plus interconnect and baseline coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Keyed by `fix8`, `fix16`, `fix32`.
    pub fu: BTreeMap<String, FuEntry>,
    pub overhead: Overhead,
    pub baseline: Baseline,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel::from_toml(DEFAULT_TABLE).expect("bundled cost table parses")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cost {
    pub area_mm2: f64,
    pub power_mw: f64,
    /// Relative to one pipeline's share of the baseline chip.
    pub area_overhead_pct: f64,
    pub power_overhead_pct: f64,
}

impl CostModel {
    pub fn from_toml(text: &str) -> Result<Self, FabricError> {
        toml::from_str(text).map_err(|e| FabricError::Config(e.to_string()))
    }

    fn entry(&self, p: FixedFormat) -> Result<FuEntry, FabricError> {
        self.fu
            .get(&format!("fix{}", p.total_bits))
            .copied()
            .ok_or(FabricError::UnsupportedPrecision(p))
    }

    /// Per-FU area in μm².
    pub fn fu_area(&self, p: FixedFormat) -> Result<f64, FabricError> {
        Ok(self.entry(p)?.area_um2)
    }

    /// Per-FU power in μW.
    pub fn fu_power(&self, p: FixedFormat) -> Result<f64, FabricError> {
        Ok(self.entry(p)?.power_uw)
    }

    /// Compute-unit area in mm².
    pub fn cu_area(&self, lanes: usize, stages: usize, p: FixedFormat) -> Result<f64, FabricError> {
        Ok((lanes * stages) as f64 * self.fu_area(p)? * 1e-6)
    }

    /// Compute-unit power in mW.
    pub fn cu_power(&self, lanes: usize, stages: usize, p: FixedFormat) -> Result<f64, FabricError> {
        Ok((lanes * stages) as f64 * self.fu_power(p)? * 1e-3)
    }

    pub fn pipeline_area_mm2(&self) -> f64 {
        self.baseline.area_mm2 / self.baseline.pipelines as f64
    }

    /// Area, power and overhead of the used units. Memory and interconnect
    /// are charged power at the compute units' power density.
    pub fn fabric_cost(&self, cfg: &FabricConfig, cus: usize, mus: usize, links: usize) -> Result<Cost, FabricError> {
        if cus > cfg.cu_slots() || mus > cfg.mu_slots() {
            return Err(FabricError::UsageExceedsGrid { cus, mus, cu_slots: cfg.cu_slots(), mu_slots: cfg.mu_slots() });
        }
        let cu_area = self.cu_area(cfg.lanes, cfg.stages, cfg.precision)?;
        let density = self.fu_power(cfg.precision)? * 1e-3 / (self.fu_area(cfg.precision)? * 1e-6);
        let extra = mus as f64 * self.overhead.mu_area_mm2 + links as f64 * self.overhead.link_area_mm2;
        let area = cus as f64 * cu_area + extra;
        let power = cus as f64 * self.cu_power(cfg.lanes, cfg.stages, cfg.precision)? + extra * density;
        Ok(Cost {
            area_mm2: area,
            power_mw: power,
            area_overhead_pct: 100.0 * area / self.pipeline_area_mm2(),
            power_overhead_pct: 100.0 * power / (self.baseline.power_per_pipeline_w * 1e3),
        })
    }
}

pub fn fu_area(p: FixedFormat) -> Result<f64, FabricError> {
    CostModel::default().fu_area(p)
}

pub fn fu_power(p: FixedFormat) -> Result<f64, FabricError> {
    CostModel::default().fu_power(p)
}

pub fn cu_area(lanes: usize, stages: usize, p: FixedFormat) -> Result<f64, FabricError> {
    CostModel::default().cu_area(lanes, stages, p)
}

pub fn fabric_cost(cfg: &FabricConfig, cus: usize, mus: usize, links: usize) -> Result<Cost, FabricError> {
    CostModel::default().fabric_cost(cfg, cus, mus, links)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_values() {
        let f = [FixedFormat::FIX8, FixedFormat::FIX16, FixedFormat::FIX32];
        let areas: Vec<f64> = f.iter().map(|&p| fu_area(p).unwrap()).collect();
        let powers: Vec<f64> = f.iter().map(|&p| fu_power(p).unwrap()).collect();
        assert_eq!(areas, [3877.0, 8108.0, 20203.0]);
        assert_eq!(powers, [223.0, 393.0, 759.0]);
        assert!((cu_area(16, 2, FixedFormat::FIX8).unwrap() - 0.124064).abs() < 1e-12);
        assert!((cu_area(1, 1, FixedFormat::FIX8).unwrap() - 0.003877).abs() < 1e-12);
        assert!((cu_area(16, 2, FixedFormat::FIX16).unwrap() - 0.259456).abs() < 1e-12);
    }

    #[test]
    fn zero_usage_and_additivity() {
        let cfg = FabricConfig::default();
        let z = fabric_cost(&cfg, 0, 0, 0).unwrap();
        assert_eq!((z.area_mm2, z.power_mw, z.area_overhead_pct), (0.0, 0.0, 0.0));
        let a = fabric_cost(&cfg, 3, 2, 9).unwrap();
        let b = fabric_cost(&cfg, 5, 1, 4).unwrap();
        let ab = fabric_cost(&cfg, 8, 3, 13).unwrap();
        assert!((a.area_mm2 + b.area_mm2 - ab.area_mm2).abs() < 1e-9);
        assert!((a.power_mw + b.power_mw - ab.power_mw).abs() < 1e-9);
        assert!(matches!(fabric_cost(&cfg, 65, 0, 0), Err(FabricError::UsageExceedsGrid { .. })));
    }

    #[test]
    fn perceptron_calibration_point() {
        let c = fabric_cost(&FabricConfig::default(), 1, 1, 4).unwrap();
        assert!((c.area_mm2 - 0.78).abs() < 1e-6);
    }
}
