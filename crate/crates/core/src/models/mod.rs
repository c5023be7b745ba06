//! The benchmark suite: application models and microbenchmarks.

pub mod bound;

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::frontend::interp::RealTensors;
use crate::frontend::{load_program, FrontendError, TypedProgram};

pub use bound::{error_bound, BoundedValue};

pub const ASSET_VERSION: &str = "v1";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown benchmark `{0}`")]
    Unknown(String),
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Csv { path: String, line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Category {
    Application,
    Micro,
}

/// Published performance of a benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Targets {
    pub latency_ns: f64,
    pub area_mm2: f64,
    /// Packets per clock, where stated.
    pub line_rate: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkSpec {
    pub name: &'static str,
    pub category: Category,
    pub file: &'static str,
    #[serde(skip)]
    pub source: &'static str,
    /// Outer-loop copies; `None` unrolls fully.
    pub unroll: Option<usize>,
    pub arity: usize,
    pub targets: Targets,
    pub latency_tol: f64,
    pub area_tol: f64,
}

macro_rules! asset {
    ($f:literal) => {
        ($f, include_str!(concat!("../../assets/v1/", $f)))
    };
}

fn spec(
    name: &'static str,
    category: Category,
    (file, source): (&'static str, &'static str),
    unroll: Option<usize>,
    arity: usize,
    latency_ns: f64,
    area_mm2: f64,
    line_rate: Option<f64>,
) -> BenchmarkSpec {
    BenchmarkSpec {
        name,
        category,
        file,
        source,
        unroll,
        arity,
        targets: Targets { latency_ns, area_mm2, line_rate },
        latency_tol: 0.25,
        area_tol: 0.30,
    }
}

/// Applications first, then microbenchmarks.
pub fn build_suite() -> Vec<BenchmarkSpec> {
    use Category::*;
    vec![
        spec("KMeans", Application, asset!("kmeans.mr"), None, 12, 76.0, 2.48, Some(1.0)),
        spec("SVM", Application, asset!("svm.mr"), None, 8, 68.0, 4.59, Some(1.0)),
        spec("DNN", Application, asset!("dnn.mr"), None, 6, 188.0, 8.80, Some(1.0)),
        spec("LSTM", Application, asset!("indigo.mr"), Some(11), 68, 380.0, 17.73, Some(0.08)),
        spec("Conv1D", Micro, asset!("conv1d.mr"), None, 10, 47.0, 4.93, Some(1.0)),
        spec("Percept", Micro, asset!("percept.mr"), None, 12, 16.0, 0.78, Some(1.0)),
        spec("SVMLin", Micro, asset!("svmlin.mr"), None, 16, 30.0, 1.82, Some(1.0)),
        spec("LSTMLin", Micro, asset!("lstmlin.mr"), None, 32, 29.0, 2.34, None),
        spec("GRULin", Micro, asset!("grulin.mr"), None, 32, 29.0, 2.34, None),
        spec("LeakyReLU", Micro, asset!("leakyrelu.mr"), None, 16, 21.0, 0.78, None),
        spec("ReLU", Micro, asset!("relu.mr"), None, 16, 20.0, 0.52, None),
        spec("SigmoidLUT", Micro, asset!("sigmoid.mr"), None, 16, 27.0, 0.52, None),
        spec("TanhLUT", Micro, asset!("tanh.mr"), None, 16, 27.0, 0.52, None),
    ]
}

/// An activation kernel in the stage-count sweep.
#[derive(Debug, Clone, Copy)]
pub struct Activation {
    pub name: &'static str,
    pub source: &'static str,
    /// Polynomial variants issue one result every other cycle.
    pub half_rate: bool,
}

pub fn activations() -> Vec<Activation> {
    let a = |name, (_, source): (&'static str, &'static str), half_rate| Activation { name, source, half_rate };
    vec![
        a("ReLU", asset!("relu.mr"), false),
        a("LeakyReLU", asset!("leakyrelu.mr"), false),
        a("SigmoidLUT", asset!("sigmoid.mr"), false),
        a("TanhLUT", asset!("tanh.mr"), false),
        a("SigmoidExp", asset!("sigmoid_taylor.mr"), true),
        a("TanhExp", asset!("tanh_taylor.mr"), true),
    ]
}

pub fn benchmark(name: &str) -> Result<BenchmarkSpec, ModelError> {
    build_suite()
        .into_iter()
        .find(|b| b.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| ModelError::Unknown(name.to_string()))
}

impl BenchmarkSpec {
    pub fn program(&self) -> Result<TypedProgram, ModelError> {
        Ok(load_program(self.source)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    /// Uniform in [-1, 1]; matrices scaled by 1 / sqrt(fan-in).
    Uniform,
    Zero,
}

/// Reproducible weights for every declared weight tensor. One-dimensional
/// tensors (biases, vectors) are left unscaled.
pub fn random_weights(tp: &TypedProgram, seed: u64, mode: WeightMode) -> RealTensors {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = BTreeMap::new();
    for w in &tp.program.weights {
        let d = &w.decl;
        let scale = if d.shape.len() == 2 { 1.0 / (d.shape[1] as f64).sqrt() } else { 1.0 };
        let vals = (0..d.len())
            .map(|_| match mode {
                WeightMode::Uniform => rng.gen_range(-1.0..=1.0) * scale,
                WeightMode::Zero => 0.0,
            })
            .collect();
        out.insert(d.name.clone(), vals);
    }
    out
}

/// Uniform random inputs in `[-range, range]`.
pub fn random_inputs(tp: &TypedProgram, rng: &mut impl Rng, range: f64) -> RealTensors {
    tp.program
        .inputs
        .iter()
        .map(|d| (d.name.clone(), (0..d.len()).map(|_| rng.gen_range(-range..=range)).collect()))
        .collect()
}

/// Writes each weight tensor to `dir/<source>` as CSV, one row per line.
pub fn write_weights(dir: &Path, tp: &TypedProgram, w: &RealTensors) -> Result<(), ModelError> {
    fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ModelError + '_ {
        move |source| ModelError::Io { path: path.display().to_string(), source }
    }
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    for decl in &tp.program.weights {
        let path = dir.join(&decl.source);
        let cols = *decl.decl.shape.last().expect("non-empty shape");
        let vals = &w[&decl.decl.name];
        let text: String = vals
            .chunks(cols)
            .map(|row| row.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(",") + "\n")
            .collect();
        std::fs::write(&path, text).map_err(io(&path))?;
    }
    Ok(())
}

/// Reads every weight tensor from `dir/<source>`.
pub fn load_weights(dir: &Path, tp: &TypedProgram) -> Result<RealTensors, ModelError> {
    let mut out = BTreeMap::new();
    for decl in &tp.program.weights {
        let path = dir.join(&decl.source);
        let p = path.display().to_string();
        let text = std::fs::read_to_string(&path).map_err(|source| ModelError::Io { path: p.clone(), source })?;
        let mut vals = Vec::new();
        for (k, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            for cell in line.split(',') {
                let v: f64 = cell.trim().parse().map_err(|_| ModelError::Csv {
                    path: p.clone(),
                    line: k + 1,
                    message: format!("bad number `{}`", cell.trim()),
                })?;
                vals.push(v);
            }
        }
        if vals.len() != decl.decl.len() {
            return Err(ModelError::Csv {
                path: p,
                line: 0,
                message: format!("{} values, expected {}", vals.len(), decl.decl.len()),
            });
        }
        out.insert(decl.decl.name.clone(), vals);
    }
    Ok(out)
}

/// Path of the shipped weights directory of the asset set.
pub fn asset_weights_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("assets").join(ASSET_VERSION).join("weights")
}

/// Shipped weights of a program, when the asset directory has them.
pub fn shipped_weights(tp: &TypedProgram) -> Result<RealTensors, ModelError> {
    load_weights(&asset_weights_dir(), tp)
}

/// Weights rounded into each tensor's declared format.
pub fn quantize_weights(tp: &TypedProgram, w: &RealTensors) -> crate::frontend::Tensors {
    let decls: Vec<_> = tp.program.weights.iter().map(|w| &w.decl).collect();
    crate::frontend::interp::quantize_tensors(&decls, w)
}
