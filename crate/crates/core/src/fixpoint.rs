//! Bit-exact fixed-point arithmetic for the 8/16/32-bit fabric data paths.

use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of entries in every activation lookup table.
pub const LUT_ENTRIES: usize = 1024;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FixError {
    #[error("format mismatch: {0} vs {1}")]
    FormatMismatch(FixedFormat, FixedFormat),
    #[error("reduce over empty vector")]
    EmptyVector,
    #[error("invalid format fix{total}<{frac}>")]
    InvalidFormat { total: u8, frac: u8 },
}

/// Signed two's-complement fixed-point format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FixedFormat {
    pub total_bits: u8,
    pub frac_bits: u8,
}

impl FixedFormat {
    pub const FIX8: FixedFormat = FixedFormat { total_bits: 8, frac_bits: 4 };
    pub const FIX16: FixedFormat = FixedFormat { total_bits: 16, frac_bits: 8 };
    pub const FIX32: FixedFormat = FixedFormat { total_bits: 32, frac_bits: 16 };

    pub fn new(total_bits: u8, frac_bits: u8) -> Result<Self, FixError> {
        if !matches!(total_bits, 8 | 16 | 32) || frac_bits >= total_bits {
            return Err(FixError::InvalidFormat { total: total_bits, frac: frac_bits });
        }
        Ok(FixedFormat { total_bits, frac_bits })
    }

    /// Default format for a width: fix8 has 4 fractional bits, fix16 8, fix32 16.
    pub fn with_default_frac(total_bits: u8) -> Result<Self, FixError> {
        FixedFormat::new(total_bits, total_bits / 2)
    }

    pub fn max_raw(self) -> i64 {
        (1i64 << (self.total_bits - 1)) - 1
    }

    pub fn min_raw(self) -> i64 {
        -(1i64 << (self.total_bits - 1))
    }

    /// Weight of one raw step.
    pub fn ulp(self) -> f64 {
        1.0 / self.scale()
    }

    pub fn scale(self) -> f64 {
        (1u64 << self.frac_bits) as f64
    }

    pub fn saturate(self, raw: i128) -> i64 {
        raw.clamp(self.min_raw() as i128, self.max_raw() as i128) as i64
    }

    pub fn is_default_frac(self) -> bool {
        self.frac_bits == self.total_bits / 2
    }

    /// Parses `fix8`, `fix16`, `fix32`, optionally with `<frac>`.
    pub fn parse(s: &str) -> Option<Self> {
        let rest = s.trim().strip_prefix("fix")?;
        let (bits, frac) = match rest.split_once('<') {
            Some((b, f)) => (b, Some(f.strip_suffix('>')?)),
            None => (rest, None),
        };
        let bits: u8 = bits.parse().ok()?;
        match frac {
            Some(f) => FixedFormat::new(bits, f.parse().ok()?).ok(),
            None => FixedFormat::with_default_frac(bits).ok(),
        }
    }
}

impl fmt::Display for FixedFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_default_frac() {
            write!(f, "fix{}", self.total_bits)
        } else {
            write!(f, "fix{}<{}>", self.total_bits, self.frac_bits)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FixedValue {
    pub raw: i64,
    pub format: FixedFormat,
}

impl FixedValue {
    /// Builds a value from a raw integer, saturating into range.
    pub fn from_raw(raw: i64, format: FixedFormat) -> Self {
        FixedValue { raw: format.saturate(raw as i128), format }
    }

    pub fn zero(format: FixedFormat) -> Self {
        FixedValue { raw: 0, format }
    }

    pub fn to_f64(self) -> f64 {
        self.raw as f64 / self.format.scale()
    }

    /// Re-expresses the value in another format with rounding and saturation.
    pub fn convert(self, to: FixedFormat) -> Self {
        let shift = to.frac_bits as i32 - self.format.frac_bits as i32;
        let raw = if shift >= 0 {
            (self.raw as i128) << shift
        } else {
            round_shift(self.raw as i128, (-shift) as u32)
        };
        FixedValue { raw: to.saturate(raw), format: to }
    }
}

impl fmt::Display for FixedValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

/// Arithmetic right shift with round-half-to-even.
pub fn round_shift(v: i128, s: u32) -> i128 {
    if s == 0 {
        return v;
    }
    let q = v >> s;
    let r = v - (q << s);
    let half = 1i128 << (s - 1);
    if r > half || (r == half && q & 1 == 1) {
        q + 1
    } else {
        q
    }
}

fn round_shift_big(v: &BigInt, s: u64) -> BigInt {
    if s == 0 {
        return v.clone();
    }
    let q: BigInt = v >> s;
    let r: BigInt = v - (&q << s);
    let half: BigInt = BigInt::one() << (s - 1);
    if r > half || (r == half && (&q & BigInt::one()) == BigInt::one()) {
        q + 1
    } else {
        q
    }
}

pub fn quantize(x: f64, f: FixedFormat) -> FixedValue {
    if x.is_nan() {
        return FixedValue::zero(f);
    }
    let scaled = (x * f.scale()).round_ties_even();
    let raw = scaled.clamp(f.min_raw() as f64, f.max_raw() as f64) as i64;
    FixedValue { raw, format: f }
}

fn same_format(a: FixedValue, b: FixedValue) -> Result<FixedFormat, FixError> {
    if a.format != b.format {
        return Err(FixError::FormatMismatch(a.format, b.format));
    }
    Ok(a.format)
}

pub fn fx_add(a: FixedValue, b: FixedValue) -> Result<FixedValue, FixError> {
    let f = same_format(a, b)?;
    Ok(FixedValue { raw: f.saturate(a.raw as i128 + b.raw as i128), format: f })
}

pub fn fx_sub(a: FixedValue, b: FixedValue) -> Result<FixedValue, FixError> {
    let f = same_format(a, b)?;
    Ok(FixedValue { raw: f.saturate(a.raw as i128 - b.raw as i128), format: f })
}

pub fn fx_mul(a: FixedValue, b: FixedValue) -> Result<FixedValue, FixError> {
    let f = same_format(a, b)?;
    let p = round_shift(a.raw as i128 * b.raw as i128, f.frac_bits as u32);
    Ok(FixedValue { raw: f.saturate(p), format: f })
}

pub fn fx_max(a: FixedValue, b: FixedValue) -> Result<FixedValue, FixError> {
    same_format(a, b)?;
    Ok(if a.raw >= b.raw { a } else { b })
}

pub fn fx_min(a: FixedValue, b: FixedValue) -> Result<FixedValue, FixError> {
    same_format(a, b)?;
    Ok(if a.raw <= b.raw { a } else { b })
}

/// `a` when `c > 0`, otherwise `b`.
pub fn select(c: FixedValue, a: FixedValue, b: FixedValue) -> Result<FixedValue, FixError> {
    same_format(a, b)?;
    Ok(if c.raw > 0 { a } else { b })
}

pub fn relu(x: FixedValue) -> FixedValue {
    FixedValue { raw: x.raw.max(0), format: x.format }
}

/// Leaky ReLU with slope 2^-shift on negative inputs.
pub fn leaky_relu(x: FixedValue, shift: u32) -> FixedValue {
    if x.raw >= 0 {
        return x;
    }
    FixedValue { raw: round_shift(x.raw as i128, shift) as i64, format: x.format }
}

pub const DEFAULT_LEAKY_SHIFT: u32 = 3;

/// Associative, commutative reduce operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CombineOp {
    Add,
    Mul,
    Max,
    Min,
}

impl CombineOp {
    pub fn name(self) -> &'static str {
        match self {
            CombineOp::Add => "add",
            CombineOp::Mul => "mul",
            CombineOp::Max => "max",
            CombineOp::Min => "min",
        }
    }
}

/// Exact partial result of a reduction, kept wide until the final saturation.
///
/// Partials from disjoint slices combine exactly, so a reduce split across
/// lanes, CUs or time slots gives the same answer as a single reduce.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Partial {
    Sum(i128),
    Prod { value: BigInt, factors: u64 },
    Max(i64),
    Min(i64),
}

impl Partial {
    pub fn identity(op: CombineOp) -> Partial {
        match op {
            CombineOp::Add => Partial::Sum(0),
            CombineOp::Mul => Partial::Prod { value: BigInt::one(), factors: 0 },
            CombineOp::Max => Partial::Max(i64::MIN),
            CombineOp::Min => Partial::Min(i64::MAX),
        }
    }

    pub fn of(op: CombineOp, x: FixedValue) -> Partial {
        match op {
            CombineOp::Add => Partial::Sum(x.raw as i128),
            CombineOp::Mul => Partial::Prod { value: BigInt::from(x.raw), factors: 1 },
            CombineOp::Max => Partial::Max(x.raw),
            CombineOp::Min => Partial::Min(x.raw),
        }
    }

    pub fn combine(&self, other: &Partial) -> Partial {
        match (self, other) {
            (Partial::Sum(a), Partial::Sum(b)) => Partial::Sum(a + b),
            (Partial::Prod { value: a, factors: fa }, Partial::Prod { value: b, factors: fb }) => {
                Partial::Prod { value: a * b, factors: fa + fb }
            }
            (Partial::Max(a), Partial::Max(b)) => Partial::Max(*a.max(b)),
            (Partial::Min(a), Partial::Min(b)) => Partial::Min(*a.min(b)),
            _ => panic!("combining partials of different operators"),
        }
    }

    /// Rounds and saturates once. `None` if no element was ever folded in.
    pub fn finish(&self, f: FixedFormat) -> Option<FixedValue> {
        let raw = match self {
            Partial::Sum(s) => f.saturate(*s),
            Partial::Prod { value, factors } => {
                if *factors == 0 {
                    return None;
                }
                let shift = f.frac_bits as u64 * (factors - 1);
                let r = round_shift_big(value, shift);
                let hi = BigInt::from(f.max_raw());
                let lo = BigInt::from(f.min_raw());
                if r > hi {
                    f.max_raw()
                } else if r < lo {
                    f.min_raw()
                } else {
                    r.to_i64().unwrap_or(0)
                }
            }
            Partial::Max(m) if *m == i64::MIN => return None,
            Partial::Min(m) if *m == i64::MAX => return None,
            Partial::Max(m) | Partial::Min(m) => *m,
        };
        Some(FixedValue { raw, format: f })
    }

    pub fn is_empty(&self) -> bool {
        match self {
            Partial::Sum(_) => false,
            Partial::Prod { factors, .. } => *factors == 0,
            Partial::Max(m) => *m == i64::MIN,
            Partial::Min(m) => *m == i64::MAX,
        }
    }

    /// Magnitude bits of the accumulator, for diagnostics.
    pub fn bits(&self) -> u64 {
        match self {
            Partial::Sum(s) => 128 - s.unsigned_abs().leading_zeros() as u64,
            Partial::Prod { value, .. } => value.abs().bits(),
            Partial::Max(m) | Partial::Min(m) => 64 - m.unsigned_abs().leading_zeros() as u64,
        }
    }
}

pub fn reduce_vector(v: &[FixedValue], op: CombineOp) -> Result<FixedValue, FixError> {
    let first = v.first().ok_or(FixError::EmptyVector)?;
    let f = first.format;
    let mut acc = Partial::identity(op);
    for x in v {
        if x.format != f {
            return Err(FixError::FormatMismatch(f, x.format));
        }
        acc = acc.combine(&Partial::of(op, *x));
    }
    Ok(acc.finish(f).expect("non-empty reduce"))
}

/// Activation functions served by lookup tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LutFn {
    Sigmoid,
    Tanh,
    Exp,
    Recip,
}

impl LutFn {
    pub const ALL: [LutFn; 4] = [LutFn::Sigmoid, LutFn::Tanh, LutFn::Exp, LutFn::Recip];

    pub fn name(self) -> &'static str {
        match self {
            LutFn::Sigmoid => "sigmoid",
            LutFn::Tanh => "tanh",
            LutFn::Exp => "exp",
            LutFn::Recip => "recip",
        }
    }

    pub fn from_name(s: &str) -> Option<LutFn> {
        LutFn::ALL.into_iter().find(|f| f.name() == s)
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            LutFn::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            LutFn::Tanh => x.tanh(),
            LutFn::Exp => x.exp(),
            LutFn::Recip => 1.0 / x,
        }
    }

    /// Mapped input domain.
    pub fn domain(self) -> (f64, f64) {
        match self {
            LutFn::Sigmoid | LutFn::Tanh | LutFn::Exp => (-8.0, 8.0),
            LutFn::Recip => (0.0, 8.0),
        }
    }

    /// Upper bound of |f'| over the domain, used for error bounds.
    pub fn max_slope(self) -> f64 {
        match self {
            LutFn::Sigmoid => 0.25,
            LutFn::Tanh => 1.0,
            LutFn::Exp => 8f64.exp(),
            LutFn::Recip => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lut {
    pub entries: Vec<FixedValue>,
    pub input_lo: f64,
    pub input_hi: f64,
}

pub fn build_lut(func: impl Fn(f64) -> f64, lo: f64, hi: f64, f: FixedFormat) -> Lut {
    assert!(lo < hi, "lut domain must be non-empty");
    let step = (hi - lo) / LUT_ENTRIES as f64;
    let entries = (0..LUT_ENTRIES)
        .map(|k| quantize(func(lo + (k as f64 + 0.5) * step), f))
        .collect();
    Lut { entries, input_lo: lo, input_hi: hi }
}

pub fn standard_lut(func: LutFn, f: FixedFormat) -> Lut {
    let (lo, hi) = func.domain();
    build_lut(|x| func.eval(x), lo, hi, f)
}

impl Lut {
    pub fn index_of(&self, x: FixedValue) -> usize {
        let v = x.to_f64();
        let t = (v - self.input_lo) / (self.input_hi - self.input_lo) * LUT_ENTRIES as f64;
        if t.is_nan() || t < 0.0 {
            0
        } else {
            (t.floor() as usize).min(LUT_ENTRIES - 1)
        }
    }

    /// The result is returned in the input's format.
    pub fn eval(&self, x: FixedValue) -> FixedValue {
        self.entries[self.index_of(x)].convert(x.format)
    }
}

pub fn lut_eval(l: &Lut, x: FixedValue) -> FixedValue {
    l.eval(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    const F8: FixedFormat = FixedFormat::FIX8;

    fn raw(r: i64) -> FixedValue {
        FixedValue::from_raw(r, F8)
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize(0.0, F8).raw, 0);
        assert_eq!(quantize(1.0, F8).raw, 16);
        assert_eq!(quantize(100.0, F8).raw, 127);
        assert_eq!(quantize(-100.0, F8).raw, -128);
        // 0.5 ulp ties go to even
        assert_eq!(quantize(1.0 / 32.0, F8).raw, 0);
        assert_eq!(quantize(3.0 / 32.0, F8).raw, 2);
    }

    #[test]
    fn add_mul_examples() {
        assert_eq!(fx_add(raw(16), raw(-16)).unwrap().raw, 0);
        let one = quantize(1.0, F8);
        assert_eq!(fx_mul(one, one).unwrap(), one);
        assert_eq!(fx_add(raw(127), raw(127)).unwrap().raw, 127);
        let other = FixedValue::from_raw(1, FixedFormat::FIX16);
        assert!(matches!(fx_add(one, other), Err(FixError::FormatMismatch(..))));
    }

    #[test]
    fn reduce_examples() {
        let x = quantize(1.5, F8);
        assert_eq!(reduce_vector(&[x], CombineOp::Add).unwrap(), x);
        let ones8 = vec![quantize(1.0, F8); 12];
        assert_eq!(reduce_vector(&ones8, CombineOp::Add).unwrap().raw, 127);
        let f16 = FixedFormat::FIX16;
        let ones16 = vec![quantize(1.0, f16); 12];
        assert_eq!(reduce_vector(&ones16, CombineOp::Add).unwrap(), quantize(12.0, f16));
        assert_eq!(reduce_vector(&[], CombineOp::Add), Err(FixError::EmptyVector));
    }

    #[test]
    fn wide_reduce_differs_from_sequential_saturation() {
        let v = [raw(127), raw(127), raw(-128)];
        assert_eq!(reduce_vector(&v, CombineOp::Add).unwrap().raw, 126);
        let seq = v.iter().skip(1).fold(v[0], |a, b| fx_add(a, *b).unwrap());
        assert_eq!(seq.raw, -1);
    }

    #[test]
    fn mul_reduce_rounds_once() {
        let h = quantize(0.5, F8);
        let v = vec![h; 5];
        assert_eq!(reduce_vector(&v, CombineOp::Mul).unwrap().raw, 0);
        let v = vec![quantize(2.0, F8); 3];
        assert_eq!(reduce_vector(&v, CombineOp::Mul).unwrap(), quantize(8.0, F8));
        let v = [quantize(1.5, F8), quantize(-2.0, F8)];
        assert_eq!(reduce_vector(&v, CombineOp::Mul).unwrap(), quantize(-3.0, F8));
    }

    #[test]
    fn activations() {
        assert_eq!(relu(raw(-40)).raw, 0);
        assert_eq!(relu(raw(40)).raw, 40);
        assert_eq!(leaky_relu(raw(-64), 3).raw, -8);
        assert_eq!(leaky_relu(raw(64), 3).raw, 64);
    }

    #[test]
    fn leaky_relu_matches_real_oracle() {
        for r in F8.min_raw()..=F8.max_raw() {
            let x = raw(r);
            let real = if r < 0 { x.to_f64() / 8.0 } else { x.to_f64() };
            assert_eq!(leaky_relu(x, 3), quantize(real, F8));
        }
    }

    #[test]
    fn lut_centres() {
        let s = standard_lut(LutFn::Sigmoid, F8);
        assert_eq!(s.entries.len(), LUT_ENTRIES);
        assert!((s.eval(quantize(0.0, F8)).raw - quantize(0.5, F8).raw).abs() <= 1);
        let t = standard_lut(LutFn::Tanh, F8);
        assert!(t.eval(quantize(0.0, F8)).raw.abs() <= 1);
        assert!(s.entries.windows(2).all(|w| w[0].raw <= w[1].raw));
    }

    #[test]
    fn lut_clamps_out_of_range() {
        let l = build_lut(|x| x, -1.0, 1.0, F8);
        assert_eq!(l.eval(quantize(5.0, F8)), l.entries[LUT_ENTRIES - 1]);
        assert_eq!(l.eval(quantize(-5.0, F8)), l.entries[0]);
    }

    #[test]
    fn convert_rounds_and_saturates() {
        let x = FixedValue::from_raw(0x0180, FixedFormat::FIX16);
        assert_eq!(x.convert(F8).raw, 24);
        let big = quantize(100.0, FixedFormat::FIX16);
        assert_eq!(big.convert(F8).raw, 127);
        assert_eq!(quantize(1.25, F8).convert(FixedFormat::FIX16), quantize(1.25, FixedFormat::FIX16));
    }
}
