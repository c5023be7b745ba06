//! Flow-cache miss and flow-completion-time studies at near-zero load.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Pareto};
use serde::{Deserialize, Serialize};

use super::AnalysisError;

/// Heavy-tailed flow sizes in packets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum FlowSizeDist {
    Pareto { shape: f64, min: f64, cap: u64 },
    Fixed { packets: u64 },
}

impl Default for FlowSizeDist {
    fn default() -> Self {
        FlowSizeDist::Pareto { shape: 1.2, min: 1.0, cap: 1_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowModel {
    pub flow_size_dist: FlowSizeDist,
    pub n_flows: usize,
    pub unstable_fields: usize,
    /// Bits of entropy per unstable field, at most 64.
    pub field_entropy_bits: u32,
    pub rng_seed: u64,
}

impl Default for FlowModel {
    fn default() -> Self {
        FlowModel {
            flow_size_dist: FlowSizeDist::default(),
            n_flows: 10_000,
            unstable_fields: 0,
            field_entropy_bits: 16,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Device {
    Cpu,
    Gpu,
    Tpu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyConstants {
    pub rule_install_ms: f64,
    pub cpu_infer_ms: f64,
    pub gpu_infer_ms: f64,
    pub tpu_infer_ms: f64,
    pub device: Device,
    pub switch_base_latency_us: f64,
    /// In-switch inference latency, normally taken from a PerfReport.
    pub dataplane_infer_ns: f64,
    pub link_gbps: f64,
    pub packet_bytes: f64,
}

impl Default for LatencyConstants {
    fn default() -> Self {
        LatencyConstants {
            rule_install_ms: 3.0,
            cpu_infer_ms: 0.67,
            gpu_infer_ms: 1.15,
            tpu_infer_ms: 3.51,
            device: Device::Cpu,
            switch_base_latency_us: 1.0,
            dataplane_infer_ns: 188.0,
            link_gbps: 100.0,
            packet_bytes: 1500.0,
        }
    }
}

impl LatencyConstants {
    pub fn check(&self) -> Result<(), AnalysisError> {
        let all = [
            self.rule_install_ms,
            self.cpu_infer_ms,
            self.gpu_infer_ms,
            self.tpu_infer_ms,
            self.switch_base_latency_us,
            self.link_gbps,
            self.packet_bytes,
        ];
        if all.iter().any(|v| v.is_nan() || *v <= 0.0) || self.dataplane_infer_ns.is_nan() || self.dataplane_infer_ns < 0.0 {
            return Err(AnalysisError::Param("latency constants must be positive".into()));
        }
        Ok(())
    }

    pub fn control_infer_ms(&self) -> f64 {
        match self.device {
            Device::Cpu => self.cpu_infer_ms,
            Device::Gpu => self.gpu_infer_ms,
            Device::Tpu => self.tpu_infer_ms,
        }
    }

    /// Inference plus rule installation for one trip to the controller.
    pub fn control_ms(&self) -> f64 {
        self.control_infer_ms() + self.rule_install_ms
    }

    fn wire_ms(&self) -> f64 {
        self.packet_bytes * 8.0 / self.link_gbps * 1e-6 + self.switch_base_latency_us * 1e-3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Caching,
    Dataplane,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowFct {
    pub packets: u64,
    pub misses: u64,
    pub fct_ms: f64,
}

impl FlowModel {
    pub fn check(&self) -> Result<(), AnalysisError> {
        if self.field_entropy_bits > 64 {
            return Err(AnalysisError::Param(format!("entropy {} bits exceeds 64", self.field_entropy_bits)));
        }
        match self.flow_size_dist {
            FlowSizeDist::Pareto { shape, min, cap } if !(shape > 0.0 && min >= 1.0 && cap >= 1) => {
                Err(AnalysisError::Param("pareto needs shape > 0, min >= 1, cap >= 1".into()))
            }
            FlowSizeDist::Fixed { packets: 0 } => Err(AnalysisError::Param("flows need at least one packet".into())),
            _ => Ok(()),
        }
    }

    pub fn flow_sizes(&self) -> Result<Vec<u64>, AnalysisError> {
        self.check()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        Ok(match self.flow_size_dist {
            FlowSizeDist::Fixed { packets } => vec![packets; self.n_flows],
            FlowSizeDist::Pareto { shape, min, cap } => {
                let d = Pareto::new(min, shape).map_err(|e| AnalysisError::Param(e.to_string()))?;
                (0..self.n_flows).map(|_| (d.sample(&mut rng).floor() as u64).clamp(1, cap)).collect()
            }
        })
    }

    /// Cache misses for one flow under an infinite cache. Field streams are
    /// keyed by (flow, field), so configurations with the same seed share
    /// their draws and adding fields or bits only refines keys.
    fn flow_misses(&self, flow: usize, packets: u64) -> u64 {
        if self.unstable_fields == 0 || self.field_entropy_bits == 0 {
            return 1;
        }
        let mut streams: Vec<ChaCha8Rng> = (0..self.unstable_fields)
            .map(|f| {
                let mut r = ChaCha8Rng::seed_from_u64(self.rng_seed ^ 0x5eed_f1e1d);
                r.set_stream(((flow as u64) << 8) | f as u64);
                r
            })
            .collect();
        let shift = 64 - self.field_entropy_bits;
        let mut seen = HashSet::new();
        let mut misses = 0;
        for _ in 0..packets {
            let key: Vec<u64> = streams.iter_mut().map(|r| r.gen::<u64>().checked_shr(shift).unwrap_or(0)).collect();
            misses += seen.insert(key) as u64;
        }
        misses
    }
}

/// Fraction of packets whose cache key has not been seen before.
pub fn cache_miss_rate(fm: &FlowModel) -> Result<f64, AnalysisError> {
    let sizes = fm.flow_sizes()?;
    let total: u64 = sizes.iter().sum();
    if total == 0 {
        return Ok(0.0);
    }
    let misses: u64 = sizes.iter().enumerate().map(|(i, &n)| fm.flow_misses(i, n)).sum();
    Ok(misses as f64 / total as f64)
}

/// Completion time of every flow when packets are handled one after another.
pub fn fct_compare(fm: &FlowModel, lc: &LatencyConstants, scheme: Scheme) -> Result<Vec<FlowFct>, AnalysisError> {
    lc.check()?;
    let sizes = fm.flow_sizes()?;
    let wire = lc.wire_ms();
    Ok(sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let (misses, rest_ms) = match scheme {
                Scheme::Caching => (fm.flow_misses(i, n), 0.0),
                Scheme::Dataplane => (1, lc.dataplane_infer_ns * 1e-6),
            };
            let hits = n - misses;
            let fct_ms = n as f64 * wire + misses as f64 * lc.control_ms() + hits as f64 * rest_ms;
            FlowFct { packets: n, misses, fct_ms }
        })
        .collect())
}

/// Caching over data-plane FCT for flows of a fixed length.
pub fn fct_ratio(fm: &FlowModel, lc: &LatencyConstants, packets: u64) -> Result<f64, AnalysisError> {
    let fm = FlowModel { flow_size_dist: FlowSizeDist::Fixed { packets }, ..fm.clone() };
    let mean = |v: Vec<FlowFct>| v.iter().map(|f| f.fct_ms).sum::<f64>() / v.len().max(1) as f64;
    Ok(mean(fct_compare(&fm, lc, Scheme::Caching)?) / mean(fct_compare(&fm, lc, Scheme::Dataplane)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fm(fields: usize, bits: u32) -> FlowModel {
        FlowModel { n_flows: 500, unstable_fields: fields, field_entropy_bits: bits, ..FlowModel::default() }
    }

    #[test]
    fn no_fields_one_miss_per_flow() {
        let m = fm(0, 16);
        let total: u64 = m.flow_sizes().unwrap().iter().sum();
        assert_eq!(cache_miss_rate(&m).unwrap(), 500.0 / total as f64);
        assert_eq!(cache_miss_rate(&fm(4, 0)).unwrap(), cache_miss_rate(&m).unwrap());
    }

    #[test]
    fn high_entropy_misses_everything() {
        assert!(cache_miss_rate(&fm(8, 16)).unwrap() > 0.99);
    }

    #[test]
    fn single_packet_flows_tie() {
        let lc = LatencyConstants::default();
        let few = |f, b| FlowModel { n_flows: 4, ..fm(f, b) };
        assert_eq!(fct_ratio(&few(8, 16), &lc, 1).unwrap(), 1.0);
        assert!(fct_ratio(&few(8, 16), &lc, 10_000).unwrap() >= 1000.0);
        let r = fct_ratio(&few(0, 16), &lc, 10_000).unwrap();
        assert!((r - 1.0).abs() < 0.2, "{r}");
    }

    #[test]
    fn bad_entropy() {
        assert!(cache_miss_rate(&fm(1, 65)).is_err());
    }
}
