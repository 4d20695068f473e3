//! Relational algebra over the versioned store.
//!
//! Plans are immutable DAGs of reference-counted nodes; shared sub-plans are
//! evaluated once. Every evaluated row carries its annotations: the carrier
//! row id, the version it represents, its creator, whether the transaction
//! under inspection touched it, and one provenance slot per base access.

pub mod codegen;
pub mod eval;
pub mod translate;

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::ScalarExpr;
use crate::sql::ast::JoinKind;
use crate::storage::{RowId, Schema, Scn, TxnId};
use crate::value::{Value, ValueKind};

pub use eval::{evaluate, sort_rows, Evaluator};

/// Identity of one tuple version.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VersionRef {
    /// A committed version, identified by its begin SCN.
    Committed { table: Arc<str>, row: RowId, begin: Scn },
    /// A version produced by statement `stmt` of `xid` (not yet committed at
    /// that point of the transaction).
    Intra {
        xid: TxnId,
        stmt: u32,
        table: Arc<str>,
        row: RowId,
    },
    /// A row of an edited what-if input table.
    Scenario { table: Arc<str>, row: RowId },
}

impl VersionRef {
    pub fn committed(table: &str, row: RowId, begin: Scn) -> VersionRef {
        VersionRef::Committed {
            table: table.into(),
            row,
            begin,
        }
    }

    pub fn table(&self) -> &str {
        match self {
            VersionRef::Committed { table, .. } | VersionRef::Intra { table, .. } | VersionRef::Scenario { table, .. } => {
                table
            }
        }
    }

    pub fn row(&self) -> RowId {
        match self {
            VersionRef::Committed { row, .. } | VersionRef::Intra { row, .. } | VersionRef::Scenario { row, .. } => *row,
        }
    }

    /// Statement that produced this version, for intra-transaction versions.
    pub fn stmt(&self) -> Option<u32> {
        match self {
            VersionRef::Intra { stmt, .. } => Some(*stmt),
            _ => None,
        }
    }

    /// Parses the textual form produced by `Display`.
    pub fn parse(s: &str) -> Result<VersionRef> {
        let bad = || Error::UnresolvedVersion(s.to_string());
        let (table, rest) = s.split_once(':').ok_or_else(bad)?;
        let table: Arc<str> = Arc::from(table);
        if let Some((row, begin)) = rest.split_once('@') {
            return Ok(VersionRef::Committed {
                table,
                row: RowId(row.parse().map_err(|_| bad())?),
                begin: Scn(begin.parse().map_err(|_| bad())?),
            });
        }
        if let Some((row, at)) = rest.split_once("#T") {
            let (xid, stmt) = at.split_once(".s").ok_or_else(bad)?;
            return Ok(VersionRef::Intra {
                xid: TxnId(xid.parse().map_err(|_| bad())?),
                stmt: stmt.parse().map_err(|_| bad())?,
                table,
                row: RowId(row.parse().map_err(|_| bad())?),
            });
        }
        if let Some(row) = rest.strip_suffix("#edit") {
            return Ok(VersionRef::Scenario {
                table,
                row: RowId(row.parse().map_err(|_| bad())?),
            });
        }
        Err(bad())
    }
}

/// `account:1@3`, `account:1#T2.s0`, `account:1#edit`.
impl fmt::Display for VersionRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VersionRef::Committed { table, row, begin } => write!(f, "{table}:{row}@{begin}"),
            VersionRef::Intra { xid, stmt, table, row } => write!(f, "{table}:{row}#T{xid}.s{stmt}"),
            VersionRef::Scenario { table, row } => write!(f, "{table}:{row}#edit"),
        }
    }
}

impl serde::Serialize for VersionRef {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
pub struct Creator {
    pub txn: TxnId,
    /// `None` for initially loaded rows.
    pub stmt: Option<u32>,
}

/// One row of an evaluated relation with its annotations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ARow {
    pub id: Option<RowId>,
    pub values: Vec<Value>,
    pub version: Option<VersionRef>,
    pub creator: Option<Creator>,
    pub affected: bool,
    pub prov: Vec<Option<VersionRef>>,
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct Column {
    pub name: String,
    pub kind: Option<ValueKind>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relation {
    pub columns: Vec<Column>,
    pub rows: Vec<ARow>,
}

impl Relation {
    /// Rows as (carrier, values) pairs, the data-level content.
    pub fn data(&self) -> Vec<(Option<RowId>, Vec<Value>)> {
        self.rows.iter().map(|r| (r.id, r.values.clone())).collect()
    }
}

/// How inserted rows obtain their row ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IdSource {
    /// Ids assigned by the original execution (ascending).
    Recorded(Vec<RowId>),
    /// Consecutive fresh ids starting here.
    Fresh(u64),
}

/// Marks rows satisfying `pred` as new versions created by `(xid, stmt)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mark {
    pub pred: Option<ScalarExpr>,
    pub xid: TxnId,
    pub stmt: u32,
    pub table: Arc<str>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstRow {
    pub id: Option<RowId>,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone)]
pub enum Op {
    /// Committed versions of `table` visible at `as_of`.
    TableAccess { table: String, as_of: Scn },
    /// A transaction's read view: its own writes from `running` plus the rows
    /// of `base` it has not written. Rows of `prior_base` missing from
    /// `running` were deleted by the transaction.
    Overlay {
        base: Rel,
        prior_base: Rel,
        running: Rel,
        xid: TxnId,
    },
    Select { input: Rel, pred: ScalarExpr },
    Project {
        input: Rel,
        items: Vec<(String, ScalarExpr)>,
        mark: Option<Mark>,
    },
    Join {
        left: Rel,
        right: Rel,
        kind: JoinKind,
        pred: Option<ScalarExpr>,
    },
    Union { left: Rel, right: Rel },
    ConstRel {
        rows: Vec<ConstRow>,
        /// Rows stand in for versions of this table (what-if edits).
        origin: Option<Arc<str>>,
    },
    /// Assigns row ids to derived rows being inserted into `table`.
    Materialize {
        input: Rel,
        table: Arc<str>,
        ids: IdSource,
        xid: TxnId,
        stmt: u32,
    },
    /// Provenance boundary: each output row's single provenance slot is the
    /// version of the input row. Clears the affected flag.
    Access { input: Rel },
}

#[derive(Debug)]
pub struct Node {
    pub op: Op,
    pub columns: Vec<Column>,
    pub prov_width: usize,
}

/// Shared handle to a plan node.
#[derive(Debug, Clone)]
pub struct Rel(pub Arc<Node>);

impl Rel {
    fn new(op: Op, columns: Vec<Column>, prov_width: usize) -> Rel {
        Rel(Arc::new(Node { op, columns, prov_width }))
    }

    pub fn op(&self) -> &Op {
        &self.0.op
    }

    pub fn columns(&self) -> &[Column] {
        &self.0.columns
    }

    pub fn arity(&self) -> usize {
        self.0.columns.len()
    }

    pub fn prov_width(&self) -> usize {
        self.0.prov_width
    }

    /// Pointer identity, the memoization key.
    pub fn key(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    pub fn ptr_eq(&self, other: &Rel) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    pub fn table_access(schema: &Schema, as_of: Scn) -> Rel {
        let columns = schema
            .columns
            .iter()
            .map(|c| Column {
                name: c.name.clone(),
                kind: Some(c.kind),
            })
            .collect();
        Rel::new(
            Op::TableAccess {
                table: schema.table.clone(),
                as_of,
            },
            columns,
            1,
        )
    }

    pub fn overlay(base: Rel, prior_base: Rel, running: Rel, xid: TxnId) -> Result<Rel> {
        for other in [&prior_base, &running] {
            if other.arity() != base.arity() {
                return Err(Error::Unsupported("overlay inputs differ in arity".into()));
            }
        }
        let columns = base.columns().to_vec();
        Ok(Rel::new(
            Op::Overlay {
                base,
                prior_base,
                running,
                xid,
            },
            columns,
            0,
        ))
    }

    pub fn select(input: Rel, pred: ScalarExpr) -> Rel {
        let columns = input.columns().to_vec();
        let w = input.prov_width();
        Rel::new(Op::Select { input, pred }, columns, w)
    }

    pub fn project(input: Rel, items: Vec<(String, ScalarExpr)>) -> Rel {
        Rel::project_marked(input, items, None)
    }

    pub fn project_marked(input: Rel, items: Vec<(String, ScalarExpr)>, mark: Option<Mark>) -> Rel {
        let columns = items
            .iter()
            .map(|(n, e)| Column {
                name: n.clone(),
                kind: infer_kind(e, input.columns()),
            })
            .collect();
        let w = input.prov_width();
        Rel::new(Op::Project { input, items, mark }, columns, w)
    }

    pub fn join(left: Rel, right: Rel, kind: JoinKind, pred: Option<ScalarExpr>) -> Rel {
        let (columns, w) = match kind {
            JoinKind::LeftSemi | JoinKind::LeftAnti => (left.columns().to_vec(), left.prov_width()),
            JoinKind::Inner | JoinKind::Cross => {
                let mut c = left.columns().to_vec();
                c.extend(right.columns().iter().cloned());
                (c, left.prov_width() + right.prov_width())
            }
        };
        Rel::new(Op::Join { left, right, kind, pred }, columns, w)
    }

    pub fn union(left: Rel, right: Rel) -> Result<Rel> {
        if left.arity() != right.arity() {
            return Err(Error::TypeMismatch(format!(
                "union of {} and {} columns",
                left.arity(),
                right.arity()
            )));
        }
        let columns = left
            .columns()
            .iter()
            .zip(right.columns())
            .map(|(l, r)| Column {
                name: l.name.clone(),
                kind: match (l.kind, r.kind) {
                    (Some(ValueKind::Int), Some(ValueKind::Decimal)) => Some(ValueKind::Decimal),
                    (None, k) => k,
                    (k, _) => k,
                },
            })
            .collect();
        let w = left.prov_width() + right.prov_width();
        Ok(Rel::new(Op::Union { left, right }, columns, w))
    }

    pub fn const_rel(columns: Vec<Column>, rows: Vec<ConstRow>, origin: Option<Arc<str>>) -> Result<Rel> {
        if let Some(r) = rows.iter().find(|r| r.values.len() != columns.len()) {
            return Err(Error::ArityMismatch {
                table: origin.as_deref().unwrap_or("constant relation").to_string(),
                expected: columns.len(),
                found: r.values.len(),
            });
        }
        Ok(Rel::new(Op::ConstRel { rows, origin }, columns, 0))
    }

    pub fn materialize(input: Rel, schema: &Schema, ids: IdSource, xid: TxnId, stmt: u32) -> Result<Rel> {
        if input.arity() != schema.arity() {
            return Err(Error::ArityMismatch {
                table: schema.table.clone(),
                expected: schema.arity(),
                found: input.arity(),
            });
        }
        let columns = schema
            .columns
            .iter()
            .map(|c| Column {
                name: c.name.clone(),
                kind: Some(c.kind),
            })
            .collect();
        let w = input.prov_width();
        Ok(Rel::new(
            Op::Materialize {
                input,
                table: Arc::from(schema.table.as_str()),
                ids,
                xid,
                stmt,
            },
            columns,
            w,
        ))
    }

    pub fn access(input: Rel) -> Rel {
        let columns = input.columns().to_vec();
        Rel::new(Op::Access { input }, columns, 1)
    }

    /// Direct inputs of this node.
    pub fn children(&self) -> Vec<&Rel> {
        match self.op() {
            Op::TableAccess { .. } | Op::ConstRel { .. } => vec![],
            Op::Overlay {
                base,
                prior_base,
                running,
                ..
            } => vec![base, prior_base, running],
            Op::Select { input, .. }
            | Op::Project { input, .. }
            | Op::Materialize { input, .. }
            | Op::Access { input } => vec![input],
            Op::Join { left, right, .. } | Op::Union { left, right } => vec![left, right],
        }
    }

    /// Whether any Overlay node is reachable.
    pub fn contains_overlay(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        fn go(r: &Rel, seen: &mut std::collections::HashSet<usize>) -> bool {
            if !seen.insert(r.key()) {
                return false;
            }
            matches!(r.op(), Op::Overlay { .. }) || r.children().into_iter().any(|c| go(c, seen))
        }
        go(self, &mut seen)
    }

    /// Number of distinct nodes in the DAG.
    pub fn node_count(&self) -> usize {
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(r) = stack.pop() {
            if seen.insert(r.key()) {
                stack.extend(r.children().into_iter().cloned());
            }
        }
        seen.len()
    }
}

/// Best-effort static kind of an expression over `cols`.
pub fn infer_kind(e: &ScalarExpr, cols: &[Column]) -> Option<ValueKind> {
    match e {
        ScalarExpr::Column(i) => cols.get(*i).and_then(|c| c.kind),
        ScalarExpr::RowId(_) => Some(ValueKind::Int),
        ScalarExpr::Literal(v) => v.kind(),
        ScalarExpr::Arith(_, l, r) => match (infer_kind(l, cols), infer_kind(r, cols)) {
            (Some(ValueKind::Int), Some(ValueKind::Int)) => Some(ValueKind::Int),
            (Some(ValueKind::Int), None) | (None, Some(ValueKind::Int)) => Some(ValueKind::Int),
            (None, None) => None,
            _ => Some(ValueKind::Decimal),
        },
        ScalarExpr::Neg(x) => infer_kind(x, cols),
        ScalarExpr::Case { whens, otherwise } => whens
            .iter()
            .map(|(_, v)| v)
            .chain(otherwise.as_deref())
            .filter_map(|v| infer_kind(v, cols))
            .reduce(|a, b| if a == b { a } else { ValueKind::Decimal }),
        ScalarExpr::Cast(_, k) => Some(*k),
        ScalarExpr::Cmp(..) | ScalarExpr::And(..) | ScalarExpr::Or(..) | ScalarExpr::Not(_) => None,
    }
}

/// Compact one-line-per-node rendering for debugging and plan display.
pub fn explain(rel: &Rel) -> String {
    let mut out = String::new();
    let mut ids = std::collections::HashMap::new();
    fn go(r: &Rel, depth: usize, out: &mut String, ids: &mut std::collections::HashMap<usize, usize>) {
        let pad = "  ".repeat(depth);
        if let Some(n) = ids.get(&r.key()) {
            out.push_str(&format!("{pad}@{n}\n"));
            return;
        }
        let n = ids.len() + 1;
        ids.insert(r.key(), n);
        let label = match r.op() {
            Op::TableAccess { table, as_of } => format!("TableAccess {table} AS OF {as_of}"),
            Op::Overlay { xid, .. } => format!("Overlay xid={xid}"),
            Op::Select { pred, .. } => format!("Select {pred}"),
            Op::Project { items, mark, .. } => format!(
                "Project [{}]{}",
                items.iter().map(|(n, e)| format!("{n}={e}")).collect::<Vec<_>>().join(", "),
                if mark.is_some() { " marked" } else { "" }
            ),
            Op::Join { kind, pred, .. } => format!(
                "Join {kind:?}{}",
                pred.as_ref().map(|p| format!(" {p}")).unwrap_or_default()
            ),
            Op::Union { .. } => "Union".into(),
            Op::ConstRel { rows, .. } => format!("ConstRel {} rows", rows.len()),
            Op::Materialize { table, .. } => format!("Materialize into {table}"),
            Op::Access { .. } => "Access".into(),
        };
        out.push_str(&format!("{pad}#{n} {label}\n"));
        for c in r.children() {
            go(c, depth + 1, out, ids);
        }
    }
    go(rel, 0, &mut out, &mut ids);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_ref_text_roundtrip() {
        for v in [
            VersionRef::Committed {
                table: "account".into(),
                row: RowId(1),
                begin: Scn(3),
            },
            VersionRef::Intra {
                xid: TxnId(2),
                stmt: 0,
                table: "account".into(),
                row: RowId(2),
            },
            VersionRef::Scenario {
                table: "account".into(),
                row: RowId(4),
            },
        ] {
            let s = v.to_string();
            assert_eq!(VersionRef::parse(&s).unwrap(), v, "{s}");
        }
        assert_eq!(
            VersionRef::Intra {
                xid: TxnId(2),
                stmt: 0,
                table: "account".into(),
                row: RowId(1)
            }
            .to_string(),
            "account:1#T2.s0"
        );
        assert!(VersionRef::parse("account").is_err());
    }

    #[test]
    fn join_prov_width_and_schema() {
        let s = Schema::new("t", &[("a", ValueKind::Int)]);
        let t = Rel::table_access(&s, Scn(0));
        let j = Rel::join(t.clone(), t.clone(), JoinKind::Cross, None);
        assert_eq!(j.arity(), 2);
        assert_eq!(j.prov_width(), 2);
        let semi = Rel::join(t.clone(), t.clone(), JoinKind::LeftSemi, None);
        assert_eq!(semi.arity(), 1);
        assert_eq!(semi.prov_width(), 1);
        let u = Rel::union(j.clone(), j).unwrap();
        assert_eq!(u.prov_width(), 4);
        assert_eq!(u.node_count(), 3);
    }
}
