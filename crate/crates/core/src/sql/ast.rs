//! Untyped syntax tree and its deterministic printer.
//!
//! Printing emits the minimal parentheses needed for the parser to rebuild
//! the same tree, so `parse(print(ast)) == ast`.

use std::fmt::{self, Display, Formatter, Write};

use crate::storage::TxnId;
use crate::value::{ArithOp, CmpOp, Value, ValueKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Statement {
    Select(Query),
    Update(Update),
    Insert(Insert),
    Delete(Delete),
    Provenance(ProvenanceRequest),
}

/// One or more SELECT blocks combined with `UNION ALL`, optionally preceded
/// by named common table expressions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub ctes: Vec<(String, Query)>,
    pub branches: Vec<SelectCore>,
}

impl Query {
    pub fn single(core: SelectCore) -> Query {
        Query {
            ctes: Vec::new(),
            branches: vec![core],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectCore {
    pub items: Vec<SelectItem>,
    pub from: Option<From>,
    pub filter: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SelectItem {
    Wildcard,
    QualifiedWildcard(String),
    Expr { expr: Expr, alias: Option<String> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct From {
    pub first: TableRef,
    pub joins: Vec<JoinClause>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JoinKind {
    /// Comma or `CROSS JOIN`.
    Cross,
    Inner,
    LeftSemi,
    LeftAnti,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinClause {
    pub kind: JoinKind,
    pub item: TableRef,
    pub on: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableRef {
    pub source: TableSource,
    pub alias: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TableSource {
    Named { name: String, as_of: Option<AsOf> },
    Derived(Box<Query>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AsOf {
    Scn(u64),
    Timestamp(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Update {
    pub table: String,
    pub assignments: Vec<(String, Expr)>,
    pub filter: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Insert {
    pub table: String,
    pub source: InsertSource,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InsertSource {
    Values(Vec<Vec<Expr>>),
    Query(Query),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delete {
    pub table: String,
    pub filter: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProvenanceRequest {
    Transaction(TxnId),
    Query(Query),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Arith(ArithOp),
    Cmp(CmpOp),
    And,
    Or,
}

impl BinOp {
    fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Cmp(_) => 4,
            BinOp::Arith(ArithOp::Add | ArithOp::Sub) => 5,
            BinOp::Arith(ArithOp::Mul | ArithOp::Div) => 6,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            BinOp::Or => "OR",
            BinOp::And => "AND",
            BinOp::Cmp(c) => c.symbol(),
            BinOp::Arith(a) => a.symbol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Column { qualifier: Option<String>, name: String },
    /// Row identity pseudo-column.
    RowId { qualifier: Option<String> },
    Literal(Value),
    Param(String),
    Binary { op: BinOp, left: Box<Expr>, right: Box<Expr> },
    Not(Box<Expr>),
    Neg(Box<Expr>),
    Case { whens: Vec<(Expr, Expr)>, otherwise: Option<Box<Expr>> },
    Cast { expr: Box<Expr>, kind: ValueKind },
}

impl Expr {
    pub fn col(name: &str) -> Expr {
        Expr::Column {
            qualifier: None,
            name: name.into(),
        }
    }

    pub fn qcol(q: &str, name: &str) -> Expr {
        Expr::Column {
            qualifier: Some(q.into()),
            name: name.into(),
        }
    }

    pub fn bin(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Binary {
            op,
            left: Box::new(l),
            right: Box::new(r),
        }
    }

    pub fn and(l: Expr, r: Expr) -> Expr {
        Expr::bin(BinOp::And, l, r)
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary { op, .. } => op.precedence(),
            Expr::Not(_) => 3,
            Expr::Neg(_) => 7,
            _ => 8,
        }
    }

    fn prints_with_minus(&self) -> bool {
        match self {
            Expr::Neg(_) => true,
            Expr::Literal(Value::Int(i)) => *i < 0,
            Expr::Literal(Value::Decimal(d)) => d.hundredths() < 0,
            Expr::Binary { left, .. } => left.prints_with_minus(),
            _ => false,
        }
    }

    /// Visits every sub-expression, parents first.
    pub fn walk(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Binary { left, right, .. } => {
                left.walk(f);
                right.walk(f);
            }
            Expr::Not(e) | Expr::Neg(e) | Expr::Cast { expr: e, .. } => e.walk(f),
            Expr::Case { whens, otherwise } => {
                for (c, v) in whens {
                    c.walk(f);
                    v.walk(f);
                }
                if let Some(o) = otherwise {
                    o.walk(f);
                }
            }
            _ => {}
        }
    }
}

fn paren(f: &mut Formatter<'_>, e: &Expr, wrap: bool) -> fmt::Result {
    if wrap {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl Display for Expr {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Column { qualifier, name } => match qualifier {
                Some(q) => write!(f, "{q}.{name}"),
                None => f.write_str(name),
            },
            Expr::RowId { qualifier } => match qualifier {
                Some(q) => write!(f, "{q}.rowid"),
                None => f.write_str("rowid"),
            },
            Expr::Literal(v) => f.write_str(&v.to_sql()),
            Expr::Param(p) => f.write_str(p),
            Expr::Binary { op, left, right } => {
                let p = op.precedence();
                let cmp = matches!(op, BinOp::Cmp(_));
                paren(f, left, left.precedence() < p || (cmp && left.precedence() == p))?;
                write!(f, " {} ", op.symbol())?;
                paren(f, right, right.precedence() <= p)
            }
            Expr::Not(e) => {
                f.write_str("NOT ")?;
                paren(f, e, e.precedence() < 3)
            }
            Expr::Neg(e) => {
                f.write_str("-")?;
                paren(f, e, e.precedence() < 7 || e.prints_with_minus())
            }
            Expr::Case { whens, otherwise } => {
                f.write_str("CASE")?;
                for (c, v) in whens {
                    write!(f, " WHEN {c} THEN {v}")?;
                }
                if let Some(o) = otherwise {
                    write!(f, " ELSE {o}")?;
                }
                f.write_str(" END")
            }
            Expr::Cast { expr, kind } => write!(f, "CAST({expr} AS {kind})"),
        }
    }
}

impl Display for AsOf {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            AsOf::Scn(s) => write!(f, "AS OF SCN {s}"),
            AsOf::Timestamp(t) => write!(f, "AS OF {}", Value::Text(t.clone()).to_sql()),
        }
    }
}

impl Display for TableRef {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match &self.source {
            TableSource::Named { name, as_of } => {
                f.write_str(name)?;
                if let Some(a) = as_of {
                    write!(f, " {a}")?;
                }
            }
            TableSource::Derived(q) => write!(f, "({q})")?,
        }
        if let Some(a) = &self.alias {
            write!(f, " {a}")?;
        }
        Ok(())
    }
}

impl Display for From {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.first)?;
        for j in &self.joins {
            match j.kind {
                JoinKind::Cross => write!(f, ", {}", j.item)?,
                JoinKind::Inner => write!(f, " JOIN {}", j.item)?,
                JoinKind::LeftSemi => write!(f, " LEFT SEMI JOIN {}", j.item)?,
                JoinKind::LeftAnti => write!(f, " LEFT ANTI JOIN {}", j.item)?,
            }
            if let Some(on) = &j.on {
                write!(f, " ON {on}")?;
            }
        }
        Ok(())
    }
}

impl Display for SelectItem {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            SelectItem::Wildcard => f.write_str("*"),
            SelectItem::QualifiedWildcard(q) => write!(f, "{q}.*"),
            SelectItem::Expr { expr, alias } => {
                write!(f, "{expr}")?;
                if let Some(a) = alias {
                    write!(f, " AS {a}")?;
                }
                Ok(())
            }
        }
    }
}

impl Display for SelectCore {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        f.write_str("SELECT ")?;
        write_list(f, &self.items)?;
        if let Some(from) = &self.from {
            write!(f, " FROM {from}")?;
        }
        if let Some(w) = &self.filter {
            write!(f, " WHERE {w}")?;
        }
        Ok(())
    }
}

impl Display for Query {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        for (i, (name, q)) in self.ctes.iter().enumerate() {
            f.write_str(if i == 0 { "WITH " } else { ", " })?;
            write!(f, "{name} AS ({q})")?;
        }
        if !self.ctes.is_empty() {
            f.write_str(" ")?;
        }
        for (i, b) in self.branches.iter().enumerate() {
            if i > 0 {
                f.write_str(" UNION ALL ")?;
            }
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

fn write_list<T: Display>(f: &mut Formatter<'_>, items: &[T]) -> fmt::Result {
    for (i, it) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{it}")?;
    }
    Ok(())
}

impl Display for Statement {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Statement::Select(q) => write!(f, "{q}"),
            Statement::Update(u) => {
                write!(f, "UPDATE {} SET ", u.table)?;
                let mut s = String::new();
                for (i, (c, e)) in u.assignments.iter().enumerate() {
                    if i > 0 {
                        s.push_str(", ");
                    }
                    let _ = write!(s, "{c} = {e}");
                }
                f.write_str(&s)?;
                if let Some(w) = &u.filter {
                    write!(f, " WHERE {w}")?;
                }
                Ok(())
            }
            Statement::Insert(i) => {
                write!(f, "INSERT INTO {} ", i.table)?;
                match &i.source {
                    InsertSource::Values(rows) => {
                        f.write_str("VALUES ")?;
                        for (n, r) in rows.iter().enumerate() {
                            if n > 0 {
                                f.write_str(", ")?;
                            }
                            f.write_str("(")?;
                            write_list(f, r)?;
                            f.write_str(")")?;
                        }
                        Ok(())
                    }
                    InsertSource::Query(q) => write!(f, "({q})"),
                }
            }
            Statement::Delete(d) => {
                write!(f, "DELETE FROM {}", d.table)?;
                if let Some(w) = &d.filter {
                    write!(f, " WHERE {w}")?;
                }
                Ok(())
            }
            Statement::Provenance(ProvenanceRequest::Transaction(x)) => {
                write!(f, "PROVENANCE OF TRANSACTION {x}")
            }
            Statement::Provenance(ProvenanceRequest::Query(q)) => write!(f, "PROVENANCE OF ({q})"),
        }
    }
}
