use proptest::prelude::*;
use inswitch::fixpoint::*;

const F8: FixedFormat = FixedFormat::FIX8;

fn all8() -> impl Iterator<Item = FixedValue> {
    (F8.min_raw()..=F8.max_raw()).map(|r| FixedValue::from_raw(r, F8))
}

fn real_sat(x: f64) -> f64 {
    quantize(x, F8).to_f64()
}

#[test]
fn fix8_binary_ops_exhaustive() {
    for a in all8() {
        for b in all8() {
            let (add, mul) = (fx_add(a, b).unwrap(), fx_mul(a, b).unwrap());
            assert_eq!(add, fx_add(b, a).unwrap());
            assert_eq!(mul, fx_mul(b, a).unwrap());
            assert_eq!(fx_max(a, b).unwrap(), fx_max(b, a).unwrap());
            assert_eq!(fx_min(a, b).unwrap(), fx_min(b, a).unwrap());
            for v in [add, mul, fx_sub(a, b).unwrap()] {
                assert!((F8.min_raw()..=F8.max_raw()).contains(&v.raw));
            }
            // Exact real result, rounded to nearest even and saturated.
            assert_eq!(add.to_f64(), real_sat(a.to_f64() + b.to_f64()));
            assert_eq!(mul.to_f64(), real_sat(a.to_f64() * b.to_f64()));
        }
    }
}

#[test]
fn multiply_by_one_is_identity() {
    let one = quantize(1.0, F8);
    for a in all8() {
        assert_eq!(fx_mul(a, one).unwrap(), a);
    }
}

#[test]
fn lut_error_bound_exhaustive() {
    for func in [LutFn::Sigmoid, LutFn::Tanh] {
        let (lo, hi) = func.domain();
        let lut = standard_lut(func, F8);
        let bound = (hi - lo) / LUT_ENTRIES as f64 * func.max_slope() + F8.ulp();
        let worst = all8().map(|x| (lut_eval(&lut, x).to_f64() - func.eval(x.to_f64())).abs()).fold(0.0, f64::max);
        assert!(worst <= bound, "{}: {worst} > {bound}", func.name());
    }
}

fn op() -> impl Strategy<Value = CombineOp> {
    prop_oneof![Just(CombineOp::Add), Just(CombineOp::Mul), Just(CombineOp::Max), Just(CombineOp::Min)]
}

proptest! {
    #[test]
    fn reduce_is_permutation_invariant(
        (raws, shuffled) in prop::collection::vec(-128i64..=127, 1..48)
            .prop_flat_map(|v| (Just(v.clone()), Just(v).prop_shuffle())),
        op in op(),
    ) {
        let fx = |rs: &[i64]| rs.iter().map(|&r| FixedValue::from_raw(r, F8)).collect::<Vec<_>>();
        prop_assert_eq!(reduce_vector(&fx(&raws), op).unwrap(), reduce_vector(&fx(&shuffled), op).unwrap());
    }

    #[test]
    fn split_reduce_matches_whole(raws in prop::collection::vec(-128i64..=127, 2..48), op in op(), cut in any::<prop::sample::Index>()) {
        let v: Vec<FixedValue> = raws.iter().map(|&r| FixedValue::from_raw(r, F8)).collect();
        let k = 1 + cut.index(v.len() - 1);
        let part = |xs: &[FixedValue]| xs.iter().fold(Partial::identity(op), |acc, x| acc.combine(&Partial::of(op, *x)));
        let joined = part(&v[..k]).combine(&part(&v[k..])).finish(F8).unwrap();
        prop_assert_eq!(joined, reduce_vector(&v, op).unwrap());
    }

    #[test]
    fn quantize_is_monotone(a in -20.0f64..20.0, b in -20.0f64..20.0, bits in prop_oneof![Just(8u8), Just(16), Just(32)]) {
        let f = FixedFormat::with_default_frac(bits).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(quantize(lo, f).raw <= quantize(hi, f).raw);
    }

    #[test]
    fn fix16_add_commutes_and_saturates(a in -32768i64..=32767, b in -32768i64..=32767) {
        let f = FixedFormat::FIX16;
        let (x, y) = (FixedValue::from_raw(a, f), FixedValue::from_raw(b, f));
        let s = fx_add(x, y).unwrap();
        prop_assert_eq!(s, fx_add(y, x).unwrap());
        prop_assert_eq!(s.raw, (a + b).clamp(f.min_raw(), f.max_raw()));
        prop_assert_eq!(fx_mul(x, y).unwrap(), fx_mul(y, x).unwrap());
    }
}
