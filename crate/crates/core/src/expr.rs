//! Resolved scalar expressions shared by the native executor and the algebra
//! evaluator.
//!
//! Columns are flat ordinals into the row being evaluated. Inside a join
//! predicate the row is the concatenation of the left and right inputs; the
//! two halves are passed separately so that no concatenation is needed.

use std::fmt;

use crate::error::{Error, Result};
use crate::storage::RowId;
use crate::value::{ArithOp, CmpOp, Value, ValueKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ScalarExpr {
    Column(usize),
    /// Carrier row id of the left (or only) input, or of the right join input.
    RowId(Side),
    Literal(Value),
    Arith(ArithOp, Box<ScalarExpr>, Box<ScalarExpr>),
    Cmp(CmpOp, Box<ScalarExpr>, Box<ScalarExpr>),
    And(Box<ScalarExpr>, Box<ScalarExpr>),
    Or(Box<ScalarExpr>, Box<ScalarExpr>),
    Not(Box<ScalarExpr>),
    Neg(Box<ScalarExpr>),
    Case {
        whens: Vec<(ScalarExpr, ScalarExpr)>,
        otherwise: Option<Box<ScalarExpr>>,
    },
    Cast(Box<ScalarExpr>, ValueKind),
}

/// The row an expression is evaluated against.
#[derive(Debug, Clone, Copy)]
pub struct RowCtx<'a> {
    pub left: &'a [Value],
    pub right: &'a [Value],
    pub ids: [Option<RowId>; 2],
}

impl<'a> RowCtx<'a> {
    pub fn single(values: &'a [Value], id: Option<RowId>) -> RowCtx<'a> {
        RowCtx {
            left: values,
            right: &[],
            ids: [id, None],
        }
    }

    pub fn pair(left: &'a [Value], right: &'a [Value], ids: [Option<RowId>; 2]) -> RowCtx<'a> {
        RowCtx { left, right, ids }
    }

    fn column(&self, i: usize) -> Result<&'a Value> {
        if i < self.left.len() {
            Ok(&self.left[i])
        } else {
            self.right
                .get(i - self.left.len())
                .ok_or_else(|| Error::UnknownColumn(format!("#{i}")))
        }
    }
}

pub fn row_id_value(id: Option<RowId>) -> Value {
    match id {
        Some(r) => Value::Int(r.0 as i64),
        None => Value::Null,
    }
}

impl ScalarExpr {
    pub fn lit(v: impl Into<Value>) -> ScalarExpr {
        ScalarExpr::Literal(v.into())
    }

    pub fn col(i: usize) -> ScalarExpr {
        ScalarExpr::Column(i)
    }

    pub fn cmp(op: CmpOp, l: ScalarExpr, r: ScalarExpr) -> ScalarExpr {
        ScalarExpr::Cmp(op, Box::new(l), Box::new(r))
    }

    pub fn arith(op: ArithOp, l: ScalarExpr, r: ScalarExpr) -> ScalarExpr {
        ScalarExpr::Arith(op, Box::new(l), Box::new(r))
    }

    pub fn and(l: ScalarExpr, r: ScalarExpr) -> ScalarExpr {
        ScalarExpr::And(Box::new(l), Box::new(r))
    }

    pub fn or(l: ScalarExpr, r: ScalarExpr) -> ScalarExpr {
        ScalarExpr::Or(Box::new(l), Box::new(r))
    }

    pub fn not(e: ScalarExpr) -> ScalarExpr {
        ScalarExpr::Not(Box::new(e))
    }

    /// Conjunction of all parts; `None` for an empty list.
    pub fn conjunction(parts: impl IntoIterator<Item = ScalarExpr>) -> Option<ScalarExpr> {
        parts.into_iter().reduce(ScalarExpr::and)
    }

    pub fn eval(&self, ctx: &RowCtx<'_>) -> Result<Value> {
        match self {
            ScalarExpr::Column(i) => ctx.column(*i).cloned(),
            ScalarExpr::RowId(side) => Ok(row_id_value(ctx.ids[*side as usize])),
            ScalarExpr::Literal(v) => Ok(v.clone()),
            ScalarExpr::Arith(op, l, r) => l.eval(ctx)?.arith(*op, &r.eval(ctx)?),
            ScalarExpr::Neg(e) => e.eval(ctx)?.negate(),
            ScalarExpr::Case { whens, otherwise } => {
                for (c, v) in whens {
                    if c.eval_bool(ctx)? {
                        return v.eval(ctx);
                    }
                }
                match otherwise {
                    Some(o) => o.eval(ctx),
                    None => Ok(Value::Null),
                }
            }
            ScalarExpr::Cast(e, kind) => e.eval(ctx)?.coerce(*kind),
            ScalarExpr::Cmp(..) | ScalarExpr::And(..) | ScalarExpr::Or(..) | ScalarExpr::Not(_) => {
                Err(Error::TypeMismatch("boolean expression used as a value".into()))
            }
        }
    }

    pub fn eval_bool(&self, ctx: &RowCtx<'_>) -> Result<bool> {
        match self {
            ScalarExpr::Cmp(op, l, r) => l.eval(ctx)?.compare(*op, &r.eval(ctx)?),
            ScalarExpr::And(l, r) => Ok(l.eval_bool(ctx)? && r.eval_bool(ctx)?),
            ScalarExpr::Or(l, r) => Ok(l.eval_bool(ctx)? || r.eval_bool(ctx)?),
            ScalarExpr::Not(e) => Ok(!e.eval_bool(ctx)?),
            _ => Err(Error::TypeMismatch("value expression used as a predicate".into())),
        }
    }

    /// Rewrites column ordinals with `f`.
    pub fn map_columns(&self, f: &impl Fn(usize) -> usize) -> ScalarExpr {
        self.map(&|e| match e {
            ScalarExpr::Column(i) => Some(ScalarExpr::Column(f(*i))),
            _ => None,
        })
    }

    /// Bottom-up rewrite: `f` returns a replacement for a node or `None` to
    /// keep (and recurse into) it.
    pub fn map(&self, f: &impl Fn(&ScalarExpr) -> Option<ScalarExpr>) -> ScalarExpr {
        if let Some(r) = f(self) {
            return r;
        }
        let b = |e: &ScalarExpr| Box::new(e.map(f));
        match self {
            ScalarExpr::Arith(op, l, r) => ScalarExpr::Arith(*op, b(l), b(r)),
            ScalarExpr::Cmp(op, l, r) => ScalarExpr::Cmp(*op, b(l), b(r)),
            ScalarExpr::And(l, r) => ScalarExpr::And(b(l), b(r)),
            ScalarExpr::Or(l, r) => ScalarExpr::Or(b(l), b(r)),
            ScalarExpr::Not(e) => ScalarExpr::Not(b(e)),
            ScalarExpr::Neg(e) => ScalarExpr::Neg(b(e)),
            ScalarExpr::Cast(e, k) => ScalarExpr::Cast(b(e), *k),
            ScalarExpr::Case { whens, otherwise } => ScalarExpr::Case {
                whens: whens.iter().map(|(c, v)| (c.map(f), v.map(f))).collect(),
                otherwise: otherwise.as_ref().map(|o| b(o)),
            },
            leaf => leaf.clone(),
        }
    }

    pub fn visit(&self, f: &mut impl FnMut(&ScalarExpr)) {
        f(self);
        match self {
            ScalarExpr::Arith(_, l, r)
            | ScalarExpr::Cmp(_, l, r)
            | ScalarExpr::And(l, r)
            | ScalarExpr::Or(l, r) => {
                l.visit(f);
                r.visit(f);
            }
            ScalarExpr::Not(e) | ScalarExpr::Neg(e) | ScalarExpr::Cast(e, _) => e.visit(f),
            ScalarExpr::Case { whens, otherwise } => {
                for (c, v) in whens {
                    c.visit(f);
                    v.visit(f);
                }
                if let Some(o) = otherwise {
                    o.visit(f);
                }
            }
            _ => {}
        }
    }

    /// Largest column ordinal referenced, if any.
    pub fn max_column(&self) -> Option<usize> {
        let mut m = None;
        self.visit(&mut |e| {
            if let ScalarExpr::Column(i) = e {
                m = Some(m.map_or(*i, |x: usize| x.max(*i)));
            }
        });
        m
    }

    pub fn is_predicate(&self) -> bool {
        matches!(
            self,
            ScalarExpr::Cmp(..) | ScalarExpr::And(..) | ScalarExpr::Or(..) | ScalarExpr::Not(_)
        )
    }

    /// Splits a predicate into its top-level conjuncts.
    pub fn conjuncts(&self) -> Vec<&ScalarExpr> {
        match self {
            ScalarExpr::And(l, r) => {
                let mut v = l.conjuncts();
                v.extend(r.conjuncts());
                v
            }
            e => vec![e],
        }
    }
}

/// Debug rendering with `#i` for columns.
impl fmt::Display for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarExpr::Column(i) => write!(f, "#{i}"),
            ScalarExpr::RowId(Side::Left) => f.write_str("rowid"),
            ScalarExpr::RowId(Side::Right) => f.write_str("right.rowid"),
            ScalarExpr::Literal(v) => f.write_str(&v.to_sql()),
            ScalarExpr::Arith(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            ScalarExpr::Cmp(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            ScalarExpr::And(l, r) => write!(f, "({l} AND {r})"),
            ScalarExpr::Or(l, r) => write!(f, "({l} OR {r})"),
            ScalarExpr::Not(e) => write!(f, "NOT {e}"),
            ScalarExpr::Neg(e) => write!(f, "-{e}"),
            ScalarExpr::Case { whens, otherwise } => {
                f.write_str("CASE")?;
                for (c, v) in whens {
                    write!(f, " WHEN {c} THEN {v}")?;
                }
                if let Some(o) = otherwise {
                    write!(f, " ELSE {o}")?;
                }
                f.write_str(" END")
            }
            ScalarExpr::Cast(e, k) => write!(f, "CAST({e} AS {k})"),
        }
    }
}
