use serde::{Deserialize, Serialize};

use super::FabricError;
use crate::fixpoint::FixedFormat;

/// Fabric geometry and timing parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FabricConfig {
    pub rows: usize,
    pub cols: usize,
    pub lanes: usize,
    pub stages: usize,
    pub precision: FixedFormat,
    pub clock_ghz: f64,
    pub mu_banks: usize,
    /// Words per memory unit.
    pub mu_capacity: usize,
    /// Cycles per interconnect segment.
    pub movement_cycles: u32,
    /// Cycles to write the result into the header vector.
    pub port_cycles: u32,
    /// Streams that may share one grid edge.
    pub route_tracks: usize,
}

impl Default for FabricConfig {
    fn default() -> Self {
        FabricConfig {
            rows: 8,
            cols: 16,
            lanes: 16,
            stages: 2,
            precision: FixedFormat::FIX8,
            clock_ghz: 1.0,
            mu_banks: 16,
            mu_capacity: 4096,
            movement_cycles: 5,
            port_cycles: 1,
            route_tracks: 64,
        }
    }
}

impl FabricConfig {
    /// Units alternate in a checkerboard; `(r + c)` even is a compute unit.
    pub fn is_cu(&self, r: usize, c: usize) -> bool {
        (r + c).is_multiple_of(2)
    }

    pub fn cu_slots(&self) -> usize {
        (self.rows * self.cols).div_ceil(2)
    }

    pub fn mu_slots(&self) -> usize {
        self.rows * self.cols / 2
    }

    pub fn cycle_ns(&self) -> f64 {
        1.0 / self.clock_ghz
    }

    /// Parses flat `key = value` text. Unknown keys are rejected.
    pub fn from_kv(text: &str) -> Result<Self, FabricError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| FabricError::Config(e.to_string()))?;
        let mut cfg = FabricConfig::default();
        for (key, value) in &table {
            let int = || {
                value
                    .as_integer()
                    .filter(|&v| v > 0)
                    .map(|v| v as usize)
                    .ok_or_else(|| FabricError::Config(format!("`{key}` must be a positive integer")))
            };
            match key.as_str() {
                "rows" => cfg.rows = int()?,
                "cols" => cfg.cols = int()?,
                "lanes" => cfg.lanes = int()?,
                "stages" => cfg.stages = int()?,
                "mu_banks" => cfg.mu_banks = int()?,
                "mu_capacity" => cfg.mu_capacity = int()?,
                "movement_cycles" => cfg.movement_cycles = int()? as u32,
                "port_cycles" => cfg.port_cycles = int()? as u32,
                "route_tracks" => cfg.route_tracks = int()?,
                "clock_ghz" => {
                    cfg.clock_ghz = value
                        .as_float()
                        .or_else(|| value.as_integer().map(|i| i as f64))
                        .filter(|&v| v > 0.0)
                        .ok_or_else(|| FabricError::Config("`clock_ghz` must be positive".into()))?
                }
                "precision" => {
                    let s = value.as_str().ok_or_else(|| FabricError::Config("`precision` must be a string".into()))?;
                    cfg.precision = FixedFormat::parse(s)
                        .ok_or_else(|| FabricError::Config(format!("unknown precision `{s}`")))?;
                }
                other => return Err(FabricError::Config(format!("unknown key `{other}`"))),
            }
        }
        if !cfg.lanes.is_power_of_two() {
            return Err(FabricError::Config("`lanes` must be a power of two".into()));
        }
        Ok(cfg)
    }

    pub fn to_kv(&self) -> String {
        format!(
            "rows = {}\ncols = {}\nlanes = {}\nstages = {}\nprecision = \"{}\"\nclock_ghz = {:?}\nmu_banks = {}\nmu_capacity = {}\nmovement_cycles = {}\nport_cycles = {}\nroute_tracks = {}\n",
            self.rows,
            self.cols,
            self.lanes,
            self.stages,
            self.precision,
            self.clock_ghz,
            self.mu_banks,
            self.mu_capacity,
            self.movement_cycles,
            self.port_cycles,
            self.route_tracks
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_roundtrip() {
        let cfg = FabricConfig { rows: 4, precision: FixedFormat::FIX16, ..Default::default() };
        assert_eq!(FabricConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);
        assert!(FabricConfig::from_kv("bogus = 1").is_err());
        assert!(FabricConfig::from_kv("lanes = 12").is_err());
        assert_eq!(FabricConfig::default().cu_slots(), 64);
    }
}
