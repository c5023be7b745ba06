//! Command-line driver: every run writes its artifacts and a manifest into
//! one run directory.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::analysis::{self, FlowModel, FlowSizeDist, LatencyConstants, Point};
use crate::compiler::{compile, estimate};
use crate::datapath::{self, AclRule, GuardConfig, MatTable, Model, PhvLayout, PipelineConfig};
use crate::fabric::{CostModel, FabricConfig};
use crate::frontend::{load_program, TypedProgram};
use crate::models::{self, BenchmarkSpec, WeightMode};

/// Prints a line, ignoring a closed stdout.
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

pub const MANIFEST_FORMAT: &str = "inswitch-run";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<crate::frontend::FrontendError> for CliError {
    fn from(e: crate::frontend::FrontendError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<crate::compiler::CompileError> for CliError {
    fn from(e: crate::compiler::CompileError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<crate::fabric::FabricError> for CliError {
    fn from(e: crate::fabric::FabricError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<models::ModelError> for CliError {
    fn from(e: models::ModelError) -> Self {
        match e {
            models::ModelError::Frontend(f) => f.into(),
            e => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<analysis::AnalysisError> for CliError {
    fn from(e: analysis::AnalysisError) -> Self {
        match e {
            analysis::AnalysisError::Param(p) => CliError::Usage(p),
            analysis::AnalysisError::Compile(c) => c.into(),
            e => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<datapath::DatapathError> for CliError {
    fn from(e: datapath::DatapathError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "inswitch", version, about = "Compile, simulate and analyze map-reduce models for an ML-capable switch")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// `default` or a fabric TOML file.
    #[arg(long, global = true)]
    pub fabric: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compile a program (file or benchmark name) into a mapping and a performance report.
    Compile {
        program: String,
        #[arg(long)]
        unroll: Option<usize>,
    },
    /// Replay a packet trace through the switch pipeline.
    Simulate {
        program: String,
        #[arg(long)]
        unroll: Option<usize>,
        /// Directory of weight CSVs.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Trace file; a synthetic trace is generated when absent.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        packets: Option<usize>,
        #[arg(long)]
        flows: Option<usize>,
        /// Arrival rate of the synthetic trace in Gpkt/s.
        #[arg(long)]
        rate: Option<f64>,
        /// Skip inference entirely.
        #[arg(long)]
        bypass: bool,
        /// Guard configuration TOML.
        #[arg(long)]
        guards: Option<PathBuf>,
        /// JSON list of ACL rules added to the guards.
        #[arg(long)]
        acl: Option<PathBuf>,
        /// JSON list of preprocessing tables.
        #[arg(long)]
        tables: Option<PathBuf>,
        #[arg(long)]
        score_output: Option<String>,
        #[arg(long, default_value_t = 0)]
        score_index: usize,
    },
    /// Traffic studies and suite tables.
    Analyze {
        kind: AnalyzeKind,
        /// Unstable field counts, `a..b` (inclusive) or a list.
        #[arg(long)]
        fields: Option<String>,
        /// Entropy bits per field, comma separated.
        #[arg(long)]
        entropy: Option<String>,
        #[arg(long)]
        flows: Option<usize>,
        /// Flow lengths in packets for the FCT study.
        #[arg(long)]
        lengths: Option<String>,
        #[arg(long)]
        latency_tol: Option<f64>,
        #[arg(long)]
        area_tol: Option<f64>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Summarize existing run directories.
    Report { runs: Vec<PathBuf> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AnalyzeKind {
    Cache,
    Fct,
    Tables,
}

/// Values accepted from a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub fabric: Option<String>,
    pub unroll: Option<usize>,
    pub weights: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub packets: Option<usize>,
    pub flows: Option<usize>,
    pub rate: Option<f64>,
    pub latency_tol: Option<f64>,
    pub area_tol: Option<f64>,
    pub guards: Option<GuardConfig>,
    pub latency: Option<LatencyConstants>,
}

/// Fully resolved settings, embedded in every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub subcommand: String,
    pub seed: u64,
    pub out: PathBuf,
    pub fabric: FabricConfig,
    pub params: Value,
}

struct RunDir {
    path: PathBuf,
    header: Value,
    artifacts: Vec<(String, u64)>,
}

impl RunDir {
    fn create(cfg: &RunConfig) -> Result<Self, CliError> {
        std::fs::create_dir_all(&cfg.out)?;
        let header = json!({ "tool": format!("inswitch {}", env!("CARGO_PKG_VERSION")), "config": cfg, "seed": cfg.seed });
        Ok(RunDir { path: cfg.out.clone(), header, artifacts: Vec::new() })
    }

    fn write(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        std::fs::write(self.path.join(name), text)?;
        self.artifacts.push((name.to_string(), text.len() as u64));
        Ok(())
    }

    /// JSON objects carry the header under `run`.
    fn write_json(&mut self, name: &str, mut v: Value) -> Result<(), CliError> {
        if let Value::Object(m) = &mut v {
            m.insert("run".into(), self.header.clone());
        }
        self.write(name, &serde_json::to_string_pretty(&v).expect("json"))
    }

    /// Text artifacts start with a `#` comment holding the header.
    fn write_text(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        self.write(name, &format!("# run {}\n{body}", self.header))
    }

    fn finish(self, summary: Value) -> Result<PathBuf, CliError> {
        let artifacts: Vec<Value> = self.artifacts.iter().map(|(f, b)| json!({ "file": f, "bytes": b })).collect();
        let m = json!({
            "format": MANIFEST_FORMAT,
            "version": MANIFEST_VERSION,
            "run": self.header,
            "artifacts": artifacts,
            "summary": summary,
        });
        std::fs::write(self.path.join("manifest.json"), serde_json::to_string_pretty(&m).expect("json"))?;
        Ok(self.path)
    }
}

/// Parses arguments, runs the subcommand and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(dir) => {
            say!("run directory: {}", dir.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn load_fabric(spec: Option<&str>) -> Result<FabricConfig, CliError> {
    match spec {
        None | Some("default") => Ok(FabricConfig::default()),
        Some(p) => Ok(FabricConfig::from_kv(&read(Path::new(p))?)?),
    }
}

/// A program path, or the name of a shipped benchmark.
fn resolve_program(s: &str) -> Result<(TypedProgram, Option<BenchmarkSpec>), CliError> {
    let p = Path::new(s);
    if p.exists() {
        return Ok((load_program(&read(p)?)?, None));
    }
    match models::benchmark(s) {
        Ok(b) => Ok((b.program()?, Some(b))),
        Err(_) => Err(CliError::Usage(format!("`{s}` is neither a file nor a benchmark"))),
    }
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, CliError> {
    let bad = || CliError::Usage(format!("bad list `{s}`"));
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (i64, i64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        return (a..=b).map(|v| v.to_string().parse().map_err(|_| bad())).collect();
    }
    s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect()
}

/// Splits `items` over `jobs` threads, keeping order.
fn par_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let chunk = items.len().div_ceil(jobs.max(1)).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = items.chunks(chunk).map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<_>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

fn execute(cli: Cli) -> Result<PathBuf, CliError> {
    let file: FileConfig = match &cli.config {
        Some(p) => toml::from_str(&read(p)?).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?,
        None => FileConfig::default(),
    };
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    let fabric = load_fabric(cli.fabric.as_deref().or(file.fabric.as_deref()))?;
    let name = match &cli.command {
        Command::Compile { .. } => "compile".to_string(),
        Command::Simulate { .. } => "simulate".to_string(),
        Command::Analyze { kind, .. } => format!("analyze-{}", serde_json::to_value(kind).expect("kind").as_str().unwrap_or("")),
        Command::Report { .. } => "report".to_string(),
    };
    let out = cli.out.clone().or(file.out.clone()).unwrap_or_else(|| PathBuf::from("runs").join(format!("{name}-{seed}")));
    let mk = |params: Value| RunConfig { subcommand: name.clone(), seed, out: out.clone(), fabric: fabric.clone(), params };
    match cli.command {
        Command::Compile { program, unroll } => {
            let (tp, spec) = resolve_program(&program)?;
            let u = unroll.or(file.unroll).or(spec.as_ref().and_then(|b| b.unroll));
            let cfg = mk(json!({ "program": program, "unroll": u }));
            let m = compile(&tp, &fabric, u)?;
            let report = estimate(&m, &CostModel::default())?;
            let mut dir = RunDir::create(&cfg)?;
            dir.write_json("mapping.json", serde_json::from_str(&m.to_json()).expect("mapping json"))?;
            dir.write_json("perf.json", serde_json::to_value(&report).expect("report"))?;
            say!(
                "{}: {:.0} ns, II {}, line rate {:.3}, {} CUs, {} MUs, {:.2} mm2",
                report.name, report.latency_ns, report.ii, report.line_rate, report.cus, report.mus, report.area_mm2
            );
            dir.finish(serde_json::to_value(&report).expect("report"))
        }
        Command::Simulate {
            program,
            unroll,
            weights,
            trace,
            packets,
            flows,
            rate,
            bypass,
            guards,
            acl,
            tables,
            score_output,
            score_index,
        } => {
            let (tp, spec) = resolve_program(&program)?;
            let mut g = match guards {
                Some(p) => toml::from_str(&read(&p)?).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?,
                None => file.guards.clone().unwrap_or_default(),
            };
            if let Some(p) = &acl {
                let rules: Vec<AclRule> =
                    serde_json::from_str(&read(p)?).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
                g.acl.extend(rules);
            }
            let tables: Vec<MatTable> = match &tables {
                Some(p) => serde_json::from_str(&read(p)?).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?,
                None => Vec::new(),
            };
            for t in &tables {
                t.check()?;
            }
            let arity = tp.program.input_arity();
            let names: Vec<String> = (0..arity).map(|k| format!("f{k}")).collect();
            let feats: Vec<&str> = names.iter().map(String::as_str).collect();
            let layout = PhvLayout::with_features(&feats);
            let u = unroll.or(file.unroll).or(spec.as_ref().and_then(|b| b.unroll));
            let score_output = score_output
                .or_else(|| tp.program.outputs.first().map(|o| o.name.clone()))
                .ok_or_else(|| CliError::Validation("program has no outputs".into()))?;
            let weights_dir = weights.or(file.weights.clone());
            let trace_path = trace.or(file.trace.clone());
            let (packets, flows, rate) =
                (packets.or(file.packets).unwrap_or(10_000), flows.or(file.flows).unwrap_or(64), rate.or(file.rate).unwrap_or(0.5));
            let cfg = mk(json!({
                "program": program, "unroll": u, "weights": weights_dir, "trace": trace_path,
                "packets": packets, "flows": flows, "rate_gpps": rate, "bypass": bypass,
                "guards": g, "tables": tables, "score_output": score_output, "score_index": score_index,
            }));
            let model = if bypass {
                None
            } else {
                let real = match (&weights_dir, &spec) {
                    (Some(d), _) => models::load_weights(d, &tp)?,
                    (None, Some(_)) => models::shipped_weights(&tp)
                        .unwrap_or_else(|_| models::random_weights(&tp, seed, WeightMode::Uniform)),
                    (None, None) => models::random_weights(&tp, seed, WeightMode::Uniform),
                };
                Some(Model {
                    mapping: compile(&tp, &fabric, u)?,
                    weights: models::quantize_weights(&tp, &real),
                    score_output,
                    score_index,
                })
            };
            let mut dir = RunDir::create(&cfg)?;
            let trace = match &trace_path {
                Some(p) => datapath::read_trace(std::io::BufReader::new(
                    std::fs::File::open(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?,
                ))?,
                None => {
                    let t = datapath::synthetic_trace(packets, flows, &feats, rate, seed);
                    let mut buf = Vec::new();
                    datapath::write_trace(&mut buf, &t, Some(&dir.header))?;
                    dir.write("trace.jsonl", &String::from_utf8(buf).expect("utf8"))?;
                    t
                }
            };
            let pc = PipelineConfig { layout, tables, model, guards: g, base_latency_ns: 1000.0, service_ns: 1.0 };
            let res = datapath::run_pipeline(&trace, &pc)?;
            let mut buf = Vec::new();
            res.write_log(&mut buf, Some(&dir.header))?;
            dir.write("decisions.jsonl", &String::from_utf8(buf).expect("utf8"))?;
            let stats = serde_json::to_value(&res.stats).expect("stats");
            dir.write_json("stats.json", stats.clone())?;
            let s = &res.stats;
            say!(
                "{} packets: {} inferred, {} rate-limited, {} anomalous; inference adds {:.1} ns ({:.1}%)",
                s.packets, s.inferred, s.rate_limited, s.anomalous, s.inference_latency_ns, s.added_latency_pct
            );
            dir.finish(stats)
        }
        Command::Analyze { kind, fields, entropy, flows, lengths, latency_tol, area_tol, jobs } => {
            let latency_tol = latency_tol.or(file.latency_tol);
            let area_tol = area_tol.or(file.area_tol);
            let lc = file.latency.clone().unwrap_or_default();
            match kind {
                AnalyzeKind::Cache => {
                    let fields: Vec<usize> = parse_list(fields.as_deref().unwrap_or("0..8"))?;
                    let entropy: Vec<u32> = parse_list(entropy.as_deref().unwrap_or("4,8,16"))?;
                    let base = FlowModel { n_flows: flows.or(file.flows).unwrap_or(10_000), rng_seed: seed, ..FlowModel::default() };
                    base.check()?;
                    let cfg = mk(json!({ "kind": kind, "fields": fields, "entropy": entropy, "flow_model": base, "jobs": jobs }));
                    let runs = par_map(&entropy, jobs, |&e| analysis::cache_sweep(&base, &fields, &[e]));
                    let points: Vec<Point> = runs.into_iter().collect::<Result<Vec<_>, _>>()?.into_iter().flatten().collect();
                    let monotone = entropy.iter().all(|e| {
                        let s = format!("entropy_{e}");
                        let ys: Vec<f64> = points.iter().filter(|p| p.series == s).map(|p| p.y).collect();
                        ys.windows(2).all(|w| w[0] <= w[1])
                    });
                    let mut dir = RunDir::create(&cfg)?;
                    dir.write("cache.csv", &analysis::to_csv(&format!("run {}", dir.header), &points))?;
                    for p in &points {
                        say!("{:<11} fields {:>2}: miss rate {:.4}", p.series, p.x, p.y);
                    }
                    dir.finish(json!({ "monotone_in_fields": monotone }))
                }
                AnalyzeKind::Fct => {
                    let lengths: Vec<u64> = parse_list(lengths.as_deref().unwrap_or("1,10,100,1000,10000,100000"))?;
                    let f: Vec<usize> = parse_list(fields.as_deref().unwrap_or("8"))?;
                    let e: Vec<u32> = parse_list(entropy.as_deref().unwrap_or("16"))?;
                    let (&f, &e) = (f.first().ok_or_else(|| CliError::Usage("no field count".into()))?, e.first().ok_or_else(|| CliError::Usage("no entropy".into()))?);
                    let dnn = models::benchmark("DNN")?;
                    let infer_ns = estimate(&compile(&dnn.program()?, &fabric, dnn.unroll)?, &CostModel::default())?.latency_ns;
                    let lc = if file.latency.is_some() { lc } else { LatencyConstants { dataplane_infer_ns: infer_ns, ..lc } };
                    let base = FlowModel {
                        flow_size_dist: FlowSizeDist::Fixed { packets: 1 },
                        n_flows: flows.or(file.flows).unwrap_or(4),
                        unstable_fields: f,
                        field_entropy_bits: e,
                        rng_seed: seed,
                    };
                    base.check()?;
                    lc.check()?;
                    let cfg = mk(json!({ "kind": kind, "lengths": lengths, "flow_model": base, "latency": lc, "jobs": jobs }));
                    let runs = par_map(&lengths, jobs, |&n| analysis::fct_sweep(&base, &lc, &[n]));
                    let points: Vec<Point> = runs.into_iter().collect::<Result<Vec<_>, _>>()?.into_iter().flatten().collect();
                    let mut dir = RunDir::create(&cfg)?;
                    dir.write("fct.csv", &analysis::to_csv(&format!("run {}", dir.header), &points))?;
                    let ratios: Vec<(f64, f64)> = points.iter().filter(|p| p.series == "ratio").map(|p| (p.x, p.y)).collect();
                    let mut table = String::from("packets  ratio\n");
                    for (n, r) in &ratios {
                        table.push_str(&format!("{n:>7}  {r:.1}\n"));
                        say!("flow of {n:>7} packets: caching / data plane = {r:.1}x");
                    }
                    dir.write_text("fct.txt", &table)?;
                    dir.finish(json!({ "ratios": ratios }))
                }
                AnalyzeKind::Tables => {
                    let mut suite = models::build_suite();
                    for b in &mut suite {
                        b.latency_tol = latency_tol.unwrap_or(b.latency_tol);
                        b.area_tol = area_tol.unwrap_or(b.area_tol);
                    }
                    let cfg = mk(json!({ "kind": kind, "latency_tol": latency_tol, "area_tol": area_tol }));
                    let t = analysis::report_tables(&suite, &fabric, &CostModel::default())?;
                    let mut dir = RunDir::create(&cfg)?;
                    dir.write_text("tables.txt", &t.to_text())?;
                    dir.write_text("tables.csv", &t.to_csv())?;
                    dir.write_json("tables.json", serde_json::from_str(&t.to_json()).expect("tables json"))?;
                    say!("{}", t.to_text().trim_end());
                    dir.finish(json!({ "all_within_tolerance": t.all_ok() }))
                }
            }
        }
        Command::Report { runs } => {
            if runs.is_empty() {
                return Err(CliError::Usage("report needs at least one run directory".into()));
            }
            let cfg = mk(json!({ "runs": runs }));
            let mut body = String::from("run | subcommand | seed | artifacts | summary\n--- | --- | --- | --- | ---\n");
            for r in &runs {
                let text = read(&r.join("manifest.json"))?;
                let m: Value = serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", r.display())))?;
                if m["format"] != MANIFEST_FORMAT {
                    return Err(CliError::Validation(format!("{}: not a run manifest", r.display())));
                }
                let files: Vec<&str> = m["artifacts"].as_array().into_iter().flatten().filter_map(|a| a["file"].as_str()).collect();
                body.push_str(&format!(
                    "{} | {} | {} | {} | {}\n",
                    r.display(),
                    m["run"]["config"]["subcommand"].as_str().unwrap_or("?"),
                    m["run"]["seed"],
                    files.join(" "),
                    m["summary"]
                ));
            }
            let mut dir = RunDir::create(&cfg)?;
            dir.write_text("report.md", &body)?;
            say!("{}", body.trim_end());
            dir.finish(json!({ "runs": runs.len() }))
        }
    }
}
