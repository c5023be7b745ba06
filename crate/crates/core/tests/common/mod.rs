#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;

/// Random well-formed programs with loop nesting up to `max_loops` and
/// extents up to 32.
pub struct ProgramGen<R: Rng> {
    rng: R,
    vars: Vec<(String, usize)>,
    vectors: Vec<(String, usize)>,
    tensors: Vec<(String, Vec<usize>)>,
    counter: usize,
    pub max_loops: usize,
}

impl<R: Rng> ProgramGen<R> {
    pub fn new(rng: R) -> Self {
        ProgramGen { rng, vars: Vec::new(), vectors: Vec::new(), tensors: Vec::new(), counter: 0, max_loops: 3 }
    }

    fn fresh(&mut self, base: &str) -> String {
        self.counter += 1;
        format!("{base}{}", self.counter)
    }

    fn extent(&mut self) -> usize {
        if self.rng.gen_bool(0.3) {
            self.rng.gen_range(17..=32)
        } else {
            self.rng.gen_range(1..=16)
        }
    }

    /// An in-bounds affine index into a dimension of length `len`.
    fn index(&mut self, len: usize) -> String {
        let fits: Vec<(String, usize)> = self.vars.iter().filter(|(_, t)| *t <= len).cloned().collect();
        if fits.is_empty() || self.rng.gen_bool(0.15) {
            return self.rng.gen_range(0..len).to_string();
        }
        let (v, t) = fits.choose(&mut self.rng).expect("non-empty").clone();
        if 2 * (t - 1) < len && t > 1 && self.rng.gen_bool(0.2) {
            return format!("2 * {v}");
        }
        let off = self.rng.gen_range(0..=len - t);
        if off == 0 {
            v
        } else {
            format!("{v} + {off}")
        }
    }

    fn constant(&mut self) -> String {
        let x: f64 = self.rng.gen_range(-40..=40) as f64 / 16.0;
        if x < 0.0 {
            format!("(0 - {})", -x)
        } else {
            format!("{x}")
        }
    }

    fn leaf(&mut self) -> String {
        let roll = self.rng.gen_range(0..10);
        if roll == 0 {
            return self.constant();
        }
        if roll < 3 && !self.vectors.is_empty() {
            let (n, len) = self.vectors.choose(&mut self.rng).expect("non-empty").clone();
            let i = self.index(len);
            return format!("{n}[{i}]");
        }
        let (n, shape) = self.tensors.choose(&mut self.rng).expect("tensors").clone();
        let idx: Vec<String> = shape.iter().map(|&d| self.index(d)).collect();
        format!("{n}[{}]", idx.join(", "))
    }

    pub fn scalar(&mut self, budget: usize, loops: usize) -> String {
        if budget == 0 {
            return self.leaf();
        }
        match self.rng.gen_range(0..12) {
            0 | 1 => self.leaf(),
            2..=4 => {
                let op = ["+", "-", "*"].choose(&mut self.rng).expect("op");
                format!("({} {op} {})", self.scalar(budget - 1, loops), self.scalar(budget - 1, loops))
            }
            5 => {
                let f = ["max", "min"].choose(&mut self.rng).expect("f");
                format!("{f}({}, {})", self.scalar(budget - 1, loops), self.scalar(budget - 1, loops))
            }
            6 => {
                let f = ["relu", "leaky_relu"].choose(&mut self.rng).expect("f");
                format!("{f}({})", self.scalar(budget - 1, loops))
            }
            7 => {
                let f = ["sigmoid", "tanh", "exp", "recip"].choose(&mut self.rng).expect("f");
                format!("lut({f}, {})", self.scalar(budget - 1, loops))
            }
            8 => format!(
                "select({}, {}, {})",
                self.scalar(budget - 1, loops),
                self.scalar(budget - 1, loops),
                self.scalar(budget - 1, loops)
            ),
            _ if loops < self.max_loops => self.reduce(budget - 1, loops),
            _ => self.leaf(),
        }
    }

    fn combine(&mut self) -> &'static str {
        ["(a, b) => a + b", "(a, b) => a + b", "(a, b) => max(a, b)", "(a, b) => min(a, b)", "(a, b) => a * b"]
            .choose(&mut self.rng)
            .expect("combine")
    }

    fn reduce(&mut self, budget: usize, loops: usize) -> String {
        let c = self.combine();
        if !self.vectors.is_empty() && self.rng.gen_bool(0.25) {
            let (n, _) = self.vectors.choose(&mut self.rng).expect("non-empty").clone();
            return format!("Reduce({n}) {{ {c} }}");
        }
        let (v, n) = (self.fresh("i"), self.extent());
        self.vars.push((v.clone(), n));
        let body = self.block(budget, loops + 1);
        self.vars.pop();
        format!("Reduce(Map({n}) {{ {v} => {body} }}) {{ {c} }}")
    }

    /// A block body, sometimes with a scalar let or a fused map let.
    fn block(&mut self, budget: usize, loops: usize) -> String {
        match self.rng.gen_range(0..6) {
            0 => {
                let t = self.fresh("t");
                let e = self.scalar(budget, loops);
                let rest = self.scalar(budget.saturating_sub(1), loops);
                format!("{t} = {e}\n {rest} * {t}")
            }
            1 if loops < self.max_loops => {
                let (m, v, n) = (self.fresh("m"), self.fresh("i"), self.extent());
                self.vars.push((v.clone(), n));
                let body = self.scalar(budget, loops + 1);
                self.vars.pop();
                let c = self.combine();
                format!("{m} = Map({n}) {{ {v} => {body} }}\n Reduce({m}) {{ {c} }}")
            }
            _ => self.scalar(budget, loops),
        }
    }

    pub fn vector(&mut self, budget: usize) -> (String, usize) {
        let (v, n) = (self.fresh("i"), self.extent());
        self.vars.push((v.clone(), n));
        let body = self.block(budget, 1);
        self.vars.pop();
        (format!("Map({n}) {{ {v} => {body} }}"), n)
    }

    pub fn program(&mut self) -> String {
        self.vars.clear();
        self.vectors.clear();
        self.tensors.clear();
        let mut decls = String::new();
        for k in 0..self.rng.gen_range(1..=2) {
            let n = self.extent();
            decls += &format!("  input x{k} : fix8[{n}];\n");
            self.tensors.push((format!("x{k}"), vec![n]));
        }
        if self.rng.gen_bool(0.7) {
            let (r, c) = (self.extent(), self.extent());
            decls += &format!("  weight W : fix8[{r}, {c}] = load(\"w.csv\");\n");
            self.tensors.push(("W".into(), vec![r, c]));
        }
        if self.rng.gen_bool(0.5) {
            let n = self.extent();
            decls += &format!("  weight v : fix8[{n}] = load(\"v.csv\");\n");
            self.tensors.push(("v".into(), vec![n]));
        }
        let mut body = String::new();
        let mut outs = Vec::new();
        let count = self.rng.gen_range(1..=3);
        for k in 0..count {
            let name = format!("b{k}");
            let budget = self.rng.gen_range(1..=4);
            let (text, len) = if self.rng.gen_bool(0.7) {
                self.vector(budget)
            } else {
                (self.scalar(budget, 0), 1)
            };
            body += &format!("  {name} = {text}\n");
            if len > 1 {
                self.vectors.push((name.clone(), len));
            }
            if k + 1 == count || self.rng.gen_bool(0.4) {
                outs.push((name, len));
            }
        }
        let out_decls: String = outs.iter().map(|(n, l)| format!("  output {n} : fix8[{l}];\n")).collect();
        format!("program rnd {{\n{decls}{out_decls}{body}}}\n")
    }
}

/// Compiles a random program under a seed-chosen fabric and unroll factor
/// and compares fabric execution with the interpreter on random inputs.
pub fn semantic_case(seed: u64) -> Result<(), String> {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use inswitch::compiler::{compile, CompileError};
    use inswitch::fabric::{execute, FabricConfig, FabricError};
    use inswitch::frontend::interp::quantize_tensors;
    use inswitch::frontend::{interpret, load_program};
    use inswitch::models::{random_inputs, random_weights, WeightMode};

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let src = ProgramGen::new(ChaCha8Rng::seed_from_u64(seed)).program();
    let tp = load_program(&src).map_err(|e| format!("{e}\n{src}"))?;
    let cfg = FabricConfig {
        rows: 32,
        cols: 32,
        lanes: [4, 8, 16][seed as usize % 3],
        stages: 1 + (seed / 3) as usize % 3,
        ..Default::default()
    };
    let unroll = if seed % 2 == 0 { None } else { Some(1 + (seed / 7) as usize % 6) };
    // Programs too large to unroll fully are folded onto one copy per loop.
    let m = match compile(&tp, &cfg, unroll) {
        Err(CompileError::Fabric(FabricError::UsageExceedsGrid { .. })) => compile(&tp, &cfg, Some(1)),
        r => r,
    }
    .map_err(|e| format!("{e}\n{src}"))?;
    let wd: Vec<_> = tp.program.weights.iter().map(|w| &w.decl).collect();
    let w = quantize_tensors(&wd, &random_weights(&tp, seed, WeightMode::Uniform));
    let id: Vec<_> = tp.program.inputs.iter().collect();
    for _ in 0..3 {
        let x = quantize_tensors(&id, &random_inputs(&tp, &mut rng, 4.0));
        let fabric = execute(&m, &x, &w).map_err(|e| e.to_string())?;
        let reference = interpret(&tp, &x, &w).map_err(|e| e.to_string())?;
        if fabric != reference {
            return Err(format!("fabric {fabric:?} != interpreter {reference:?}\n{src}"));
        }
    }
    Ok(())
}
