//! Match-action tables that turn header fields into model features.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::packet::{Phv, PhvLayout};
use super::DatapathError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchKind {
    Exact,
    Ternary,
    Range,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeyPattern {
    Exact(i64),
    Ternary { value: i64, mask: i64 },
    /// Inclusive bounds.
    Range { lo: i64, hi: i64 },
    Any,
}

impl KeyPattern {
    pub fn matches(&self, v: i64) -> bool {
        match *self {
            KeyPattern::Exact(x) => v == x,
            KeyPattern::Ternary { value, mask } => v & mask == value & mask,
            KeyPattern::Range { lo, hi } => (lo..=hi).contains(&v),
            KeyPattern::Any => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    NoOp,
    Set { dst: String, value: i64 },
    /// `dst = (src + add) << shift`, shifting right when `shift < 0`.
    AddShift { dst: String, src: String, add: i64, shift: i32 },
    /// `dst = log2(src)` with `frac_bits` fractional bits, by the
    /// leading-one position plus the next mantissa bits.
    Log2 { dst: String, src: String, frac_bits: u32 },
    Lookup { dst: String, src: String, table: BTreeMap<i64, i64>, default: i64 },
    Seq(Vec<Action>),
}

/// Fixed-point `log2(v)` for `v > 0`; zero otherwise.
pub fn log2_approx(v: i64, frac_bits: u32) -> i64 {
    if v <= 0 {
        return 0;
    }
    let e = 63 - v.leading_zeros() as i64;
    let mantissa = if e as u32 >= frac_bits {
        (v >> (e as u32 - frac_bits)) & ((1 << frac_bits) - 1)
    } else {
        (v << (frac_bits - e as u32)) & ((1 << frac_bits) - 1)
    };
    (e << frac_bits) | mantissa
}

impl Action {
    pub fn apply(&self, phv: &mut Phv, layout: &PhvLayout) -> Result<(), DatapathError> {
        let get = |phv: &Phv, f: &str| phv.get(layout, f).ok_or_else(|| DatapathError::MissingField(f.to_string()));
        match self {
            Action::NoOp => Ok(()),
            Action::Set { dst, value } => phv.set(layout, dst, *value),
            Action::AddShift { dst, src, add, shift } => {
                let x = get(phv, src)?.saturating_add(*add);
                let y = if *shift >= 0 { x.checked_shl(*shift as u32).unwrap_or(0) } else { x >> (-*shift).min(63) };
                phv.set(layout, dst, y)
            }
            Action::Log2 { dst, src, frac_bits } => {
                let y = log2_approx(get(phv, src)?, *frac_bits);
                phv.set(layout, dst, y)
            }
            Action::Lookup { dst, src, table, default } => {
                let y = table.get(&get(phv, src)?).copied().unwrap_or(*default);
                phv.set(layout, dst, y)
            }
            Action::Seq(actions) => actions.iter().try_for_each(|a| a.apply(phv, layout)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatEntry {
    pub pattern: Vec<KeyPattern>,
    pub action: Action,
}

/// Entries are in priority order; the first match fires.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatTable {
    pub name: String,
    pub match_kind: MatchKind,
    pub keys: Vec<String>,
    pub entries: Vec<MatEntry>,
    pub default_action: Action,
}

impl MatTable {
    pub fn new(name: &str, match_kind: MatchKind, keys: &[&str]) -> Self {
        MatTable {
            name: name.into(),
            match_kind,
            keys: keys.iter().map(|s| s.to_string()).collect(),
            entries: Vec::new(),
            default_action: Action::NoOp,
        }
    }

    pub fn entry(mut self, pattern: Vec<KeyPattern>, action: Action) -> Self {
        self.entries.push(MatEntry { pattern, action });
        self
    }

    /// Rejects patterns that do not fit the table's match kind.
    pub fn check(&self) -> Result<(), DatapathError> {
        for e in &self.entries {
            if e.pattern.len() != self.keys.len() {
                return Err(DatapathError::Table(format!("`{}`: entry has {} keys", self.name, e.pattern.len())));
            }
            let ok = e.pattern.iter().all(|p| {
                matches!(
                    (self.match_kind, p),
                    (_, KeyPattern::Any)
                        | (MatchKind::Exact, KeyPattern::Exact(_))
                        | (MatchKind::Ternary, KeyPattern::Ternary { .. } | KeyPattern::Exact(_))
                        | (MatchKind::Range, KeyPattern::Range { .. } | KeyPattern::Exact(_))
                )
            });
            if !ok {
                return Err(DatapathError::Table(format!("`{}`: pattern kind mismatch", self.name)));
            }
        }
        Ok(())
    }
}

pub fn mat_apply(t: &MatTable, phv: &Phv, layout: &PhvLayout) -> Result<Phv, DatapathError> {
    let key: Vec<i64> = t
        .keys
        .iter()
        .map(|k| phv.get(layout, k).ok_or_else(|| DatapathError::MissingField(k.clone())))
        .collect::<Result<_, _>>()?;
    let action = t
        .entries
        .iter()
        .find(|e| e.pattern.iter().zip(&key).all(|(p, &v)| p.matches(v)))
        .map(|e| &e.action)
        .unwrap_or(&t.default_action);
    let mut out = phv.clone();
    action.apply(&mut out, layout)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapath::packet::{parse, PacketRecord, FIVE_TUPLE};

    fn phv(layout: &PhvLayout, port: i64) -> Phv {
        let mut fields: BTreeMap<String, i64> = FIVE_TUPLE.iter().map(|f| (f.to_string(), 1)).collect();
        fields.insert("dst_port".into(), port);
        parse(&PacketRecord { arrival_ns: 0, fields, payload_len: 64 }, layout).unwrap()
    }

    #[test]
    fn exact_default_and_priority() {
        let layout = PhvLayout::with_features(&["svc_likelihood"]);
        let t = MatTable::new("svc", MatchKind::Exact, &["dst_port"])
            .entry(vec![KeyPattern::Exact(443)], Action::Set { dst: "svc_likelihood".into(), value: 9 });
        t.check().unwrap();
        assert_eq!(mat_apply(&t, &phv(&layout, 443), &layout).unwrap().get(&layout, "svc_likelihood"), Some(9));
        assert_eq!(mat_apply(&t, &phv(&layout, 80), &layout).unwrap().get(&layout, "svc_likelihood"), Some(0));
        let empty = MatTable::new("e", MatchKind::Exact, &["dst_port"]);
        assert_eq!(mat_apply(&empty, &phv(&layout, 80), &layout).unwrap(), phv(&layout, 80));
        let tern = MatTable::new("t", MatchKind::Ternary, &["dst_port"])
            .entry(vec![KeyPattern::Ternary { value: 0x100, mask: 0x100 }], Action::Set { dst: "svc_likelihood".into(), value: 1 })
            .entry(vec![KeyPattern::Any], Action::Set { dst: "svc_likelihood".into(), value: 2 });
        assert_eq!(mat_apply(&tern, &phv(&layout, 443), &layout).unwrap().get(&layout, "svc_likelihood"), Some(1));
        assert_eq!(mat_apply(&tern, &phv(&layout, 80), &layout).unwrap().get(&layout, "svc_likelihood"), Some(2));
    }

    #[test]
    fn log2_fixed() {
        assert_eq!(log2_approx(1, 4), 0);
        assert_eq!(log2_approx(8, 4), 3 << 4);
        assert_eq!(log2_approx(12, 4), (3 << 4) | 8);
        assert_eq!(log2_approx(0, 4), 0);
    }
}
