//! Worst-case error of fixed-point execution relative to real arithmetic.

use std::collections::BTreeMap;

use crate::fixpoint::{quantize, CombineOp, FixedFormat, LutFn};
use crate::frontend::ast::ElemOp;
use crate::frontend::interp::{run, Domain, InterpError, RealTensors};
use crate::frontend::TypedProgram;

/// A real value and a bound on the distance of its fixed-point image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundedValue {
    pub value: f64,
    pub err: f64,
}

struct Bounds {
    format: FixedFormat,
}

impl Bounds {
    fn half_ulp(&self) -> f64 {
        self.format.ulp() / 2.0
    }

    /// Extra error when the real value lies outside the representable range.
    fn saturate(&self, b: BoundedValue) -> BoundedValue {
        let hi = self.format.max_raw() as f64 * self.format.ulp();
        let lo = self.format.min_raw() as f64 * self.format.ulp();
        let excess = (b.value - hi).max(lo - b.value).max(0.0);
        BoundedValue { value: b.value, err: b.err + excess }
    }

    fn lut(&self, f: LutFn, a: BoundedValue) -> BoundedValue {
        let (lo, hi) = f.domain();
        let step = (hi - lo) / crate::fixpoint::LUT_ENTRIES as f64;
        let clamped = a.value.clamp(lo, hi - step / 2.0);
        let slope = match f {
            LutFn::Exp => (a.value.max(clamped) + a.err + step).min(hi).exp(),
            LutFn::Recip => {
                let near = (a.value.abs() - a.err - step).max(0.0);
                if near == 0.0 {
                    f64::INFINITY
                } else {
                    1.0 / (near * near)
                }
            }
            _ => f.max_slope(),
        };
        let clamp_err = (f.eval(a.value) - f.eval(clamped)).abs();
        let value = f.eval(a.value);
        self.saturate(BoundedValue { value, err: slope * (a.err + step) + clamp_err + self.half_ulp() })
    }
}

impl Domain for Bounds {
    type V = BoundedValue;

    fn lit(&self, x: f64) -> BoundedValue {
        BoundedValue { value: x, err: (quantize(x, self.format).to_f64() - x).abs() }
    }

    fn load(&self, v: BoundedValue) -> BoundedValue {
        v
    }

    fn store(&self, v: BoundedValue, f: FixedFormat) -> BoundedValue {
        let extra = if f.frac_bits < self.format.frac_bits { f.ulp() / 2.0 } else { 0.0 };
        Bounds { format: f }.saturate(BoundedValue { value: v.value, err: v.err + extra })
    }

    fn op(&self, op: ElemOp, a: &[BoundedValue]) -> BoundedValue {
        let b = |value: f64, err: f64| self.saturate(BoundedValue { value, err });
        match op {
            ElemOp::Add => b(a[0].value + a[1].value, a[0].err + a[1].err),
            ElemOp::Sub => b(a[0].value - a[1].value, a[0].err + a[1].err),
            ElemOp::Mul => {
                let (x, y) = (a[0], a[1]);
                b(x.value * y.value, x.value.abs() * y.err + y.value.abs() * x.err + x.err * y.err + self.half_ulp())
            }
            ElemOp::Max => b(a[0].value.max(a[1].value), a[0].err.max(a[1].err)),
            ElemOp::Min => b(a[0].value.min(a[1].value), a[0].err.max(a[1].err)),
            ElemOp::Select => {
                let (c, x, y) = (a[0], a[1], a[2]);
                if c.value.abs() <= c.err || c.value == 0.0 {
                    let v = if c.value > 0.0 { x.value } else { y.value };
                    b(v, x.err.max(y.err) + (x.value - y.value).abs())
                } else if c.value > 0.0 {
                    x
                } else {
                    y
                }
            }
            ElemOp::Relu => b(a[0].value.max(0.0), a[0].err),
            ElemOp::LeakyRelu { shift } => {
                let v = if a[0].value < 0.0 { a[0].value / (1u64 << shift) as f64 } else { a[0].value };
                b(v, a[0].err + self.half_ulp())
            }
            ElemOp::Lut(f) => self.lut(f, a[0]),
        }
    }

    fn reduce(&self, op: CombineOp, xs: &[BoundedValue]) -> BoundedValue {
        let mut it = xs.iter().copied();
        let first = it.next().expect("non-empty reduce");
        let r = it.fold(first, |acc, x| match op {
            CombineOp::Add => BoundedValue { value: acc.value + x.value, err: acc.err + x.err },
            CombineOp::Mul => BoundedValue {
                value: acc.value * x.value,
                err: acc.value.abs() * x.err + x.value.abs() * acc.err + acc.err * x.err,
            },
            CombineOp::Max => BoundedValue { value: acc.value.max(x.value), err: acc.err.max(x.err) },
            CombineOp::Min => BoundedValue { value: acc.value.min(x.value), err: acc.err.max(x.err) },
        });
        let r = if op == CombineOp::Mul && xs.len() > 1 { BoundedValue { err: r.err + self.half_ulp(), ..r } } else { r };
        self.saturate(r)
    }
}

/// Per-output bounds on `|fixed - real|` for one real input.
pub fn error_bound(tp: &TypedProgram, inputs: &RealTensors, weights: &RealTensors) -> Result<RealTensors, InterpError> {
    let prog = &tp.program;
    let wrap = |decls: Vec<&crate::frontend::ast::TensorDecl>, src: &RealTensors| -> BTreeMap<String, Vec<BoundedValue>> {
        decls
            .into_iter()
            .filter_map(|d| {
                src.get(&d.name).map(|v| {
                    let vals = v
                        .iter()
                        .map(|&x| {
                            let q = quantize(x, d.format).convert(prog.precision).to_f64();
                            BoundedValue { value: x, err: (q - x).abs() }
                        })
                        .collect();
                    (d.name.clone(), vals)
                })
            })
            .collect()
    };
    let ins = wrap(prog.inputs.iter().collect(), inputs);
    let ws = wrap(prog.weights.iter().map(|w| &w.decl).collect(), weights);
    let out = run(&Bounds { format: prog.precision }, tp, &ins, &ws)?;
    Ok(out.into_iter().map(|(k, v)| (k, v.into_iter().map(|b| b.err).collect())).collect())
}
