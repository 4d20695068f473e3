//! Scalar values and their SQL semantics.
//!
//! Numbers come in two flavours: 64-bit integers and exact decimals with two
//! fractional digits. They compare and combine with each other; any other mix
//! of non-null kinds is a type error.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::de::{self, Deserializer, MapAccess, Visitor};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixed-point decimal stored as hundredths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Decimal(i64);

impl Decimal {
    pub const SCALE: i64 = 100;

    pub fn from_hundredths(h: i64) -> Self {
        Decimal(h)
    }

    pub fn from_int(v: i64) -> Result<Self> {
        v.checked_mul(Self::SCALE)
            .map(Decimal)
            .ok_or(Error::Overflow)
    }

    pub fn hundredths(self) -> i64 {
        self.0
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

impl FromStr for Decimal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::TypeMismatch(format!("invalid decimal literal '{s}'"));
        let (neg, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        if frac_part.len() > 2
            || !int_part.bytes().all(|b| b.is_ascii_digit())
            || !frac_part.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(bad());
        }
        let whole: i64 = if int_part.is_empty() {
            0
        } else {
            int_part.parse().map_err(|_| Error::Overflow)?
        };
        let mut frac: i64 = if frac_part.is_empty() {
            0
        } else {
            frac_part.parse().map_err(|_| bad())?
        };
        if frac_part.len() == 1 {
            frac *= 10;
        }
        let h = whole
            .checked_mul(100)
            .and_then(|w| w.checked_add(frac))
            .ok_or(Error::Overflow)?;
        Ok(Decimal(if neg { -h } else { h }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Int,
    Decimal,
    Text,
}

impl ValueKind {
    pub fn is_numeric(self) -> bool {
        matches!(self, ValueKind::Int | ValueKind::Decimal)
    }

    pub fn sql_name(self) -> &'static str {
        match self {
            ValueKind::Int => "INT",
            ValueKind::Decimal => "DECIMAL",
            ValueKind::Text => "TEXT",
        }
    }
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.sql_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Value {
    Null,
    Int(i64),
    Decimal(Decimal),
    Text(String),
}

/// Arithmetic operators shared by the expression evaluators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Comparison operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::NotEq => "!=",
            CmpOp::Lt => "<",
            CmpOp::LtEq => "<=",
            CmpOp::Gt => ">",
            CmpOp::GtEq => ">=",
        }
    }
}

impl Value {
    pub fn text(s: impl Into<String>) -> Value {
        Value::Text(s.into())
    }

    /// Decimal from a whole number, e.g. `Value::dec(50)` is `50.00`.
    pub fn dec(whole: i64) -> Value {
        Value::Decimal(Decimal::from_hundredths(whole * Decimal::SCALE))
    }

    pub fn kind(&self) -> Option<ValueKind> {
        match self {
            Value::Null => None,
            Value::Int(_) => Some(ValueKind::Int),
            Value::Decimal(_) => Some(ValueKind::Decimal),
            Value::Text(_) => Some(ValueKind::Text),
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    fn as_hundredths(&self) -> Option<i128> {
        match self {
            Value::Int(i) => Some(*i as i128 * 100),
            Value::Decimal(d) => Some(d.0 as i128),
            _ => None,
        }
    }

    /// Converts a value for storage into a column of `kind`.
    pub fn coerce(self, kind: ValueKind) -> Result<Value> {
        match (self, kind) {
            (Value::Null, _) => Ok(Value::Null),
            (Value::Int(i), ValueKind::Decimal) => Ok(Value::Decimal(Decimal::from_int(i)?)),
            (Value::Decimal(d), ValueKind::Int) => Ok(Value::Int(d.0 / Decimal::SCALE)),
            (v @ Value::Int(_), ValueKind::Int)
            | (v @ Value::Decimal(_), ValueKind::Decimal)
            | (v @ Value::Text(_), ValueKind::Text) => Ok(v),
            (Value::Text(s), k) => s
                .trim()
                .parse::<Decimal>()
                .and_then(|d| Value::Decimal(d).coerce(k))
                .map_err(|_| Error::TypeMismatch(format!("cannot convert '{s}' to {k}"))),
            (v, ValueKind::Text) => Ok(Value::Text(v.to_string())),
        }
    }

    pub fn arith(&self, op: ArithOp, rhs: &Value) -> Result<Value> {
        if self.is_null() || rhs.is_null() {
            return Ok(Value::Null);
        }
        match (self, rhs) {
            (Value::Int(a), Value::Int(b)) => {
                let r = match op {
                    ArithOp::Add => a.checked_add(*b),
                    ArithOp::Sub => a.checked_sub(*b),
                    ArithOp::Mul => a.checked_mul(*b),
                    ArithOp::Div => {
                        if *b == 0 {
                            return Err(Error::DivisionByZero);
                        }
                        a.checked_div(*b)
                    }
                };
                r.map(Value::Int).ok_or(Error::Overflow)
            }
            _ => {
                let (Some(a), Some(b)) = (self.as_hundredths(), rhs.as_hundredths()) else {
                    return Err(Error::TypeMismatch(format!(
                        "cannot apply {} to {} and {}",
                        op.symbol(),
                        self.kind_name(),
                        rhs.kind_name()
                    )));
                };
                let r = match op {
                    ArithOp::Add => a + b,
                    ArithOp::Sub => a - b,
                    ArithOp::Mul => a * b / 100,
                    ArithOp::Div => {
                        if b == 0 {
                            return Err(Error::DivisionByZero);
                        }
                        a * 100 / b
                    }
                };
                i64::try_from(r)
                    .map(|h| Value::Decimal(Decimal(h)))
                    .map_err(|_| Error::Overflow)
            }
        }
    }

    pub fn negate(&self) -> Result<Value> {
        match self {
            Value::Null => Ok(Value::Null),
            Value::Int(i) => i.checked_neg().map(Value::Int).ok_or(Error::Overflow),
            Value::Decimal(d) => d.0.checked_neg().map(|h| Value::Decimal(Decimal(h))).ok_or(Error::Overflow),
            Value::Text(_) => Err(Error::TypeMismatch("cannot negate text".into())),
        }
    }

    /// SQL ordering between two non-null values; `None` when either is null.
    pub fn sql_cmp(&self, rhs: &Value) -> Result<Option<Ordering>> {
        match (self, rhs) {
            (Value::Null, _) | (_, Value::Null) => Ok(None),
            (Value::Text(a), Value::Text(b)) => Ok(Some(a.cmp(b))),
            _ => match (self.as_hundredths(), rhs.as_hundredths()) {
                (Some(a), Some(b)) => Ok(Some(a.cmp(&b))),
                _ => Err(Error::TypeMismatch(format!(
                    "cannot compare {} with {}",
                    self.kind_name(),
                    rhs.kind_name()
                ))),
            },
        }
    }

    /// Two-valued comparison: `NULL = NULL` holds, any other comparison
    /// involving NULL is false.
    pub fn compare(&self, op: CmpOp, rhs: &Value) -> Result<bool> {
        match op {
            CmpOp::Eq => self.sql_equal(rhs),
            CmpOp::NotEq => self.sql_equal(rhs).map(|b| !b),
            _ => Ok(match self.sql_cmp(rhs)? {
                None => false,
                Some(ord) => match op {
                    CmpOp::Lt => ord == Ordering::Less,
                    CmpOp::LtEq => ord != Ordering::Greater,
                    CmpOp::Gt => ord == Ordering::Greater,
                    CmpOp::GtEq => ord != Ordering::Less,
                    CmpOp::Eq | CmpOp::NotEq => unreachable!(),
                },
            }),
        }
    }

    fn sql_equal(&self, rhs: &Value) -> Result<bool> {
        match (self, rhs) {
            (Value::Null, Value::Null) => Ok(true),
            (Value::Null, _) | (_, Value::Null) => Ok(false),
            _ => Ok(self.sql_cmp(rhs)? == Some(Ordering::Equal)),
        }
    }

    /// Total order used for deterministic row ordering:
    /// NULL, then numbers by magnitude, then text.
    pub fn sort_cmp(&self, rhs: &Value) -> Ordering {
        fn rank(v: &Value) -> u8 {
            match v {
                Value::Null => 0,
                Value::Int(_) | Value::Decimal(_) => 1,
                Value::Text(_) => 2,
            }
        }
        match (self, rhs) {
            (Value::Text(a), Value::Text(b)) => a.cmp(b),
            _ => match (self.as_hundredths(), rhs.as_hundredths()) {
                (Some(a), Some(b)) => a.cmp(&b).then_with(|| rank_exact(self).cmp(&rank_exact(rhs))),
                _ => rank(self).cmp(&rank(rhs)),
            },
        }
    }

    /// Key under which SQL-equal values hash identically.
    pub fn join_key(&self) -> JoinKey {
        match self {
            Value::Null => JoinKey::Null,
            Value::Int(_) | Value::Decimal(_) => JoinKey::Num(self.as_hundredths().unwrap_or_default()),
            Value::Text(s) => JoinKey::Text(s.clone()),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Value::Null => "NULL",
            Value::Int(_) => "INT",
            Value::Decimal(_) => "DECIMAL",
            Value::Text(_) => "TEXT",
        }
    }

    /// SQL literal text for this value.
    pub fn to_sql(&self) -> String {
        match self {
            Value::Null => "NULL".into(),
            Value::Int(i) => i.to_string(),
            Value::Decimal(d) => d.to_string(),
            Value::Text(s) => format!("'{}'", s.replace('\'', "''")),
        }
    }
}

// Int sorts before an equal Decimal so that the order stays total.
fn rank_exact(v: &Value) -> u8 {
    match v {
        Value::Int(_) => 0,
        _ => 1,
    }
}

/// Lexicographic comparison of value tuples under [`Value::sort_cmp`].
pub fn cmp_rows(a: &[Value], b: &[Value]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = x.sort_cmp(y);
        if o != Ordering::Equal {
            return o;
        }
    }
    a.len().cmp(&b.len())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum JoinKey {
    Null,
    Num(i128),
    Text(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("NULL"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Decimal(d) => write!(f, "{d}"),
            Value::Text(s) => f.write_str(s),
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

// JSON encoding: integers as numbers, text as strings, decimals as
// `{"decimal": "-20.00"}` so that they stay exact and distinguishable.
impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Value::Null => s.serialize_none(),
            Value::Int(i) => s.serialize_i64(*i),
            Value::Text(t) => s.serialize_str(t),
            Value::Decimal(d) => {
                let mut m = s.serialize_map(Some(1))?;
                m.serialize_entry("decimal", &d.to_string())?;
                m.end()
            }
        }
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Value, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Value;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("null, an integer, a string or {\"decimal\": \"..\"}")
            }

            fn visit_unit<E: de::Error>(self) -> std::result::Result<Value, E> {
                Ok(Value::Null)
            }

            fn visit_none<E: de::Error>(self) -> std::result::Result<Value, E> {
                Ok(Value::Null)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Value, E> {
                Ok(Value::Int(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Value, E> {
                i64::try_from(v)
                    .map(Value::Int)
                    .map_err(|_| E::custom("integer out of range"))
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Value, E> {
                format!("{v}")
                    .parse::<Decimal>()
                    .map(Value::Decimal)
                    .map_err(E::custom)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Value, E> {
                Ok(Value::Text(v.to_string()))
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Value, A::Error> {
                let Some((key, text)) = map.next_entry::<String, String>()? else {
                    return Err(de::Error::custom("empty value object"));
                };
                if key != "decimal" {
                    return Err(de::Error::unknown_field(&key, &["decimal"]));
                }
                text.parse::<Decimal>()
                    .map(Value::Decimal)
                    .map_err(de::Error::custom)
            }
        }
        d.deserialize_any(V)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_roundtrips_through_text() {
        for s in ["0.00", "-20.00", "12.50", "-0.05", "7.00"] {
            let d: Decimal = s.parse().unwrap();
            assert_eq!(d.to_string(), s);
        }
        assert_eq!("12.5".parse::<Decimal>().unwrap().hundredths(), 1250);
        assert!("1.234".parse::<Decimal>().is_err());
        assert!("abc".parse::<Decimal>().is_err());
    }

    #[test]
    fn balance_arithmetic_is_exact() {
        let bal = Value::dec(50);
        assert_eq!(bal.arith(ArithOp::Sub, &Value::Int(70)).unwrap(), Value::dec(-20));
        let total = Value::dec(50).arith(ArithOp::Add, &Value::dec(-10)).unwrap();
        assert_eq!(total, Value::dec(40));
        assert!(!total.compare(CmpOp::Lt, &Value::Int(0)).unwrap());
    }

    #[test]
    fn mixed_kind_comparison_is_an_error() {
        assert!(Value::text("Alice").compare(CmpOp::Lt, &Value::Int(5)).is_err());
        assert!(Value::text("a").arith(ArithOp::Add, &Value::Int(1)).is_err());
    }

    #[test]
    fn null_comparisons_are_two_valued() {
        assert!(Value::Null.compare(CmpOp::Eq, &Value::Null).unwrap());
        assert!(!Value::Null.compare(CmpOp::Eq, &Value::Int(1)).unwrap());
        assert!(Value::Null.compare(CmpOp::NotEq, &Value::Int(1)).unwrap());
        assert!(!Value::Null.compare(CmpOp::Lt, &Value::Int(1)).unwrap());
        assert_eq!(Value::Null.arith(ArithOp::Add, &Value::Int(1)).unwrap(), Value::Null);
    }

    #[test]
    fn division_by_zero() {
        assert!(matches!(
            Value::Int(1).arith(ArithOp::Div, &Value::Int(0)),
            Err(Error::DivisionByZero)
        ));
        assert!(matches!(
            Value::dec(1).arith(ArithOp::Div, &Value::Int(0)),
            Err(Error::DivisionByZero)
        ));
    }

    #[test]
    fn json_encoding_is_unambiguous() {
        let vals = vec![Value::Null, Value::Int(-3), Value::text("B"), Value::dec(-20)];
        let json = serde_json::to_string(&vals).unwrap();
        assert_eq!(json, r#"[null,-3,"B",{"decimal":"-20.00"}]"#);
        let back: Vec<Value> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, vals);
    }

    #[test]
    fn join_keys_match_sql_equality() {
        assert_eq!(Value::Int(5).join_key(), Value::dec(5).join_key());
        assert_ne!(Value::Int(5).join_key(), Value::text("5").join_key());
    }
}
