//! Packet records, header vectors and line-delimited traces.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DatapathError;

pub const FIVE_TUPLE: [&str; 5] = ["src_ip", "dst_ip", "src_port", "dst_port", "proto"];
pub const TRACE_FORMAT: &str = "inswitch-trace";
pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub arrival_ns: u64,
    pub fields: BTreeMap<String, i64>,
    pub payload_len: u32,
}

impl PacketRecord {
    pub fn five_tuple(&self) -> Result<[i64; 5], DatapathError> {
        let mut t = [0; 5];
        for (k, f) in FIVE_TUPLE.iter().enumerate() {
            t[k] = *self.fields.get(*f).ok_or_else(|| DatapathError::MissingField(f.to_string()))?;
        }
        Ok(t)
    }

    /// Stable hash of the five-tuple.
    pub fn flow_id(&self) -> Result<u64, DatapathError> {
        let mut h = DefaultHasher::new();
        self.five_tuple()?.hash(&mut h);
        Ok(h.finish())
    }
}

/// Fixed container layout. The five-tuple always leads; `features` names the
/// containers, in order, that form the feature slice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhvLayout {
    pub containers: Vec<String>,
    pub features: Vec<String>,
}

impl PhvLayout {
    /// Five-tuple plus the given feature containers.
    pub fn with_features(features: &[&str]) -> Self {
        let mut containers: Vec<String> = FIVE_TUPLE.iter().map(|s| s.to_string()).collect();
        for f in features {
            if !containers.iter().any(|c| c == f) {
                containers.push(f.to_string());
            }
        }
        PhvLayout { containers, features: features.iter().map(|s| s.to_string()).collect() }
    }

    pub fn index(&self, field: &str) -> Option<usize> {
        self.containers.iter().position(|c| c == field)
    }
}

/// Packet header vector: one integer per layout container.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Phv {
    pub values: Vec<i64>,
    pub flow_id: u64,
}

impl Phv {
    pub fn get(&self, layout: &PhvLayout, field: &str) -> Option<i64> {
        layout.index(field).map(|i| self.values[i])
    }

    pub fn set(&mut self, layout: &PhvLayout, field: &str, v: i64) -> Result<(), DatapathError> {
        let i = layout.index(field).ok_or_else(|| DatapathError::MissingField(field.to_string()))?;
        self.values[i] = v;
        Ok(())
    }

    pub fn feature_slice(&self, layout: &PhvLayout) -> Vec<i64> {
        layout.features.iter().map(|f| self.get(layout, f).unwrap_or(0)).collect()
    }

    /// Containers not fed to inference.
    pub fn bypass_slice(&self, layout: &PhvLayout) -> Vec<i64> {
        layout
            .containers
            .iter()
            .zip(&self.values)
            .filter(|(c, _)| !layout.features.contains(c))
            .map(|(_, v)| *v)
            .collect()
    }
}

pub fn parse(p: &PacketRecord, layout: &PhvLayout) -> Result<Phv, DatapathError> {
    let flow_id = p.flow_id()?;
    let values = layout.containers.iter().map(|c| p.fields.get(c).copied().unwrap_or(0)).collect();
    Ok(Phv { values, flow_id })
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    run: Option<serde_json::Value>,
}

/// Writes the header line, carrying `run` when given, then one record per line.
pub fn write_trace(w: &mut impl Write, packets: &[PacketRecord], run: Option<&serde_json::Value>) -> Result<(), DatapathError> {
    let header = Header { format: TRACE_FORMAT.into(), version: TRACE_VERSION, run: run.cloned() };
    writeln!(w, "{}", serde_json::to_string(&header).expect("header serializes"))?;
    for p in packets {
        writeln!(w, "{}", serde_json::to_string(p).expect("record serializes"))?;
    }
    Ok(())
}

pub fn read_trace(r: impl BufRead) -> Result<Vec<PacketRecord>, DatapathError> {
    let mut lines = r.lines();
    let first = lines.next().ok_or_else(|| DatapathError::Trace { line: 1, message: "empty trace".into() })??;
    let h: Header = serde_json::from_str(&first).map_err(|e| DatapathError::Trace { line: 1, message: e.to_string() })?;
    if h.format != TRACE_FORMAT || h.version != TRACE_VERSION {
        return Err(DatapathError::Trace { line: 1, message: format!("unsupported trace {} v{}", h.format, h.version) });
    }
    let mut out = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: PacketRecord =
            serde_json::from_str(&line).map_err(|e| DatapathError::Trace { line: k + 2, message: e.to_string() })?;
        p.five_tuple().map_err(|e| DatapathError::Trace { line: k + 2, message: e.to_string() })?;
        out.push(p);
    }
    Ok(out)
}

/// Synthetic trace: `flows` flows with Poisson arrivals at `rate_gpps`,
/// each packet carrying the named feature fields as small random integers.
pub fn synthetic_trace(n: usize, flows: usize, features: &[&str], rate_gpps: f64, seed: u64) -> Vec<PacketRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tuples: Vec<[i64; 5]> = (0..flows.max(1))
        .map(|_| {
            [
                rng.gen_range(0..1i64 << 32),
                rng.gen_range(0..1i64 << 32),
                rng.gen_range(1024..65536),
                [80, 443, 22, 53, 8080][rng.gen_range(0..5)],
                [6, 17][rng.gen_range(0..2)],
            ]
        })
        .collect();
    let mut t = 0.0f64;
    (0..n)
        .map(|_| {
            let u: f64 = rng.gen_range(f64::EPSILON..1.0);
            t += -u.ln() / rate_gpps;
            let tuple = tuples[rng.gen_range(0..tuples.len())];
            let mut fields: BTreeMap<String, i64> =
                FIVE_TUPLE.iter().zip(tuple).map(|(k, v)| (k.to_string(), v)).collect();
            for f in features {
                fields.insert(f.to_string(), rng.gen_range(-32..=32));
            }
            PacketRecord { arrival_ns: t as u64, fields, payload_len: rng.gen_range(64..=1500) }
        })
        .collect()
}
