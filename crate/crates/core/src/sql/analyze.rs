//! Name resolution and type checking.
//!
//! The analyzer turns a bound (parameter-free) syntax tree into resolved
//! statements whose expressions address columns by flat ordinal. It also
//! inserts the casts needed so that every runtime value has exactly its
//! statically derived kind (e.g. an INT branch of a DECIMAL CASE).

use crate::error::{Error, Result};
use crate::expr::{ScalarExpr, Side};
use crate::sql::ast::{self, BinOp, Expr, JoinKind, SelectItem, Statement, TableSource};
use crate::storage::{Schema, Scn, TxnId};
use crate::value::ValueKind;

/// What the analyzer needs to know about the database.
pub trait Catalog {
    fn table_schema(&self, name: &str) -> Result<Schema>;
    /// Largest SCN whose wall clock is at or before `ts`.
    fn resolve_timestamp(&self, ts: &str) -> Result<Scn>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutColumn {
    pub name: String,
    /// `None` when the column only ever holds NULL.
    pub kind: Option<ValueKind>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BoundStatement {
    Select(BoundQuery),
    Update(BoundUpdate),
    Insert(BoundInsert),
    Delete(BoundDelete),
    ProvenanceOfTransaction(TxnId),
    ProvenanceOfQuery(BoundQuery),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundQuery {
    /// Common table expressions, referenced by index from `BoundSource::Cte`.
    /// Only a statement's top-level query has them.
    pub ctes: Vec<BoundQuery>,
    pub branches: Vec<BoundSelect>,
    pub columns: Vec<OutColumn>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundSelect {
    pub from: Option<BoundFrom>,
    pub filter: Option<ScalarExpr>,
    pub items: Vec<(String, ScalarExpr)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundFrom {
    pub first: BoundSource,
    pub joins: Vec<BoundJoin>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundJoin {
    pub kind: JoinKind,
    pub source: BoundSource,
    /// Evaluated over (visible left columns ++ right columns).
    pub on: Option<ScalarExpr>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BoundSource {
    Table {
        name: String,
        alias: String,
        as_of: Option<Scn>,
        arity: usize,
    },
    Derived {
        alias: String,
        query: Box<BoundQuery>,
    },
    Cte {
        alias: String,
        index: usize,
        arity: usize,
    },
}

impl BoundSource {
    pub fn width(&self) -> usize {
        match self {
            BoundSource::Table { arity, .. } | BoundSource::Cte { arity, .. } => *arity,
            BoundSource::Derived { query, .. } => query.columns.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundUpdate {
    pub table: String,
    /// (column ordinal, new value) pairs, in column order.
    pub sets: Vec<(usize, ScalarExpr)>,
    pub filter: Option<ScalarExpr>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundDelete {
    pub table: String,
    pub filter: Option<ScalarExpr>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BoundInsertSource {
    Values(Vec<Vec<ScalarExpr>>),
    /// Query plus per-column casts to the target kinds.
    Query(BoundQuery, Vec<Option<ValueKind>>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundInsert {
    pub table: String,
    pub source: BoundInsertSource,
}

impl BoundStatement {
    /// Table written by a DML statement.
    pub fn target_table(&self) -> Option<&str> {
        match self {
            BoundStatement::Update(u) => Some(&u.table),
            BoundStatement::Insert(i) => Some(&i.table),
            BoundStatement::Delete(d) => Some(&d.table),
            _ => None,
        }
    }

    /// Every table referenced without AS OF, including the target.
    pub fn tables_read(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut add = |t: &str| {
            if !out.iter().any(|o| o == t) {
                out.push(t.to_string());
            }
        };
        match self {
            BoundStatement::Select(q) | BoundStatement::ProvenanceOfQuery(q) => q.visit_tables(&mut |t, a| {
                if a.is_none() {
                    add(t)
                }
            }),
            BoundStatement::Update(u) => add(&u.table),
            BoundStatement::Delete(d) => add(&d.table),
            BoundStatement::Insert(i) => {
                add(&i.table);
                if let BoundInsertSource::Query(q, _) = &i.source {
                    q.visit_tables(&mut |t, a| {
                        if a.is_none() {
                            add(t)
                        }
                    });
                }
            }
            BoundStatement::ProvenanceOfTransaction(_) => {}
        }
        out
    }
}

impl BoundQuery {
    /// Visits table sources depth-first in FROM order.
    pub fn visit_tables(&self, f: &mut impl FnMut(&str, Option<Scn>)) {
        for c in &self.ctes {
            c.visit_tables(f);
        }
        for b in &self.branches {
            if let Some(from) = &b.from {
                for src in std::iter::once(&from.first).chain(from.joins.iter().map(|j| &j.source)) {
                    match src {
                        BoundSource::Table { name, as_of, .. } => f(name, *as_of),
                        BoundSource::Derived { query, .. } => query.visit_tables(f),
                        BoundSource::Cte { .. } => {}
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ty {
    Val(Option<ValueKind>),
    Bool,
}

struct ScopeItem {
    alias: String,
    columns: Vec<OutColumn>,
    offset: usize,
    rowid: Option<Side>,
}

#[derive(Default)]
struct Scope {
    items: Vec<ScopeItem>,
}

impl Scope {
    fn resolve(&self, qualifier: Option<&str>, name: &str) -> Result<(usize, Option<ValueKind>)> {
        let mut hits = Vec::new();
        for it in &self.items {
            if qualifier.is_some_and(|q| q != it.alias) {
                continue;
            }
            for (i, c) in it.columns.iter().enumerate() {
                if c.name == name {
                    hits.push((it.offset + i, c.kind, format!("{}.{}", it.alias, c.name)));
                }
            }
        }
        match hits.len() {
            0 => {
                if let Some(q) = qualifier {
                    if !self.items.iter().any(|it| it.alias == q) {
                        return Err(Error::UnknownTable(q.to_string()));
                    }
                    return Err(Error::UnknownColumn(format!("{q}.{name}")));
                }
                Err(Error::UnknownColumn(name.to_string()))
            }
            1 => Ok((hits[0].0, hits[0].1)),
            _ => Err(Error::AmbiguousColumn {
                name: name.to_string(),
                candidates: hits.into_iter().map(|h| h.2).collect(),
            }),
        }
    }

    fn rowid(&self, qualifier: Option<&str>) -> Result<Side> {
        let candidates: Vec<&ScopeItem> = self
            .items
            .iter()
            .filter(|it| qualifier.is_none_or(|q| q == it.alias))
            .collect();
        if let Some(q) = qualifier {
            if candidates.is_empty() {
                return Err(Error::UnknownTable(q.to_string()));
            }
        }
        let with: Vec<&ScopeItem> = candidates.iter().copied().filter(|it| it.rowid.is_some()).collect();
        match (with.len(), candidates.len()) {
            (1, _) => Ok(with[0].rowid.unwrap()),
            (0, _) => Err(Error::Unsupported(format!(
                "rowid of '{}' is not available here",
                qualifier.unwrap_or("the current row")
            ))),
            _ => Err(Error::AmbiguousColumn {
                name: "rowid".into(),
                candidates: with.iter().map(|it| format!("{}.rowid", it.alias)).collect(),
            }),
        }
    }
}

fn unify(a: Option<ValueKind>, b: Option<ValueKind>, what: &str) -> Result<Option<ValueKind>> {
    use ValueKind::*;
    Ok(match (a, b) {
        (None, k) | (k, None) => k,
        (Some(x), Some(y)) if x == y => Some(x),
        (Some(Int), Some(Decimal)) | (Some(Decimal), Some(Int)) => Some(Decimal),
        (Some(x), Some(y)) => return Err(Error::TypeMismatch(format!("{what}: {x} and {y} are incompatible"))),
    })
}

/// Wraps `e` in a cast when its kind differs from the unified numeric kind.
fn widen(e: ScalarExpr, from: Option<ValueKind>, to: Option<ValueKind>) -> ScalarExpr {
    match (from, to) {
        (Some(ValueKind::Int), Some(ValueKind::Decimal)) => ScalarExpr::Cast(Box::new(e), ValueKind::Decimal),
        _ => e,
    }
}

/// Checks that a value of kind `from` may be stored in a column of kind `to`.
fn assign(e: ScalarExpr, from: Option<ValueKind>, to: ValueKind, column: &str) -> Result<ScalarExpr> {
    match from {
        None => Ok(e),
        Some(k) if k == to => Ok(e),
        Some(ValueKind::Int) if to == ValueKind::Decimal => Ok(ScalarExpr::Cast(Box::new(e), to)),
        Some(k) => Err(Error::TypeMismatch(format!(
            "cannot assign {k} value to column {column} of type {to}"
        ))),
    }
}

pub struct Analyzer<'c> {
    catalog: &'c dyn Catalog,
}

/// Analyzes a bound statement against `catalog`.
pub fn analyze(stmt: &Statement, catalog: &dyn Catalog) -> Result<BoundStatement> {
    Analyzer { catalog }.statement(stmt)
}

pub fn analyze_query(q: &ast::Query, catalog: &dyn Catalog) -> Result<BoundQuery> {
    Analyzer { catalog }.query(q)
}

impl Analyzer<'_> {
    fn statement(&self, stmt: &Statement) -> Result<BoundStatement> {
        match stmt {
            Statement::Select(q) => Ok(BoundStatement::Select(self.query(q)?)),
            Statement::Provenance(ast::ProvenanceRequest::Query(q)) => Ok(BoundStatement::ProvenanceOfQuery(self.query(q)?)),
            Statement::Provenance(ast::ProvenanceRequest::Transaction(x)) => Ok(BoundStatement::ProvenanceOfTransaction(*x)),
            Statement::Update(u) => self.update(u),
            Statement::Delete(d) => {
                let (schema, scope) = self.target(&d.table)?;
                let _ = schema;
                let filter = d.filter.as_ref().map(|w| self.predicate(w, &scope)).transpose()?;
                Ok(BoundStatement::Delete(BoundDelete {
                    table: d.table.clone(),
                    filter,
                }))
            }
            Statement::Insert(i) => self.insert(i),
        }
    }

    fn target(&self, table: &str) -> Result<(Schema, Scope)> {
        let schema = self.catalog.table_schema(table)?;
        let scope = Scope {
            items: vec![ScopeItem {
                alias: table.to_string(),
                columns: schema
                    .columns
                    .iter()
                    .map(|c| OutColumn {
                        name: c.name.clone(),
                        kind: Some(c.kind),
                    })
                    .collect(),
                offset: 0,
                rowid: Some(Side::Left),
            }],
        };
        Ok((schema, scope))
    }

    fn update(&self, u: &ast::Update) -> Result<BoundStatement> {
        let (schema, scope) = self.target(&u.table)?;
        let mut sets: Vec<(usize, ScalarExpr)> = Vec::new();
        for (col, e) in &u.assignments {
            let idx = schema
                .column_index(col)
                .ok_or_else(|| Error::UnknownColumn(format!("{}.{col}", u.table)))?;
            if sets.iter().any(|(i, _)| *i == idx) {
                return Err(Error::DuplicateColumn {
                    table: u.table.clone(),
                    column: col.clone(),
                });
            }
            let (se, k) = self.value(e, &scope)?;
            sets.push((idx, assign(se, k, schema.columns[idx].kind, col)?));
        }
        sets.sort_by_key(|(i, _)| *i);
        let filter = u.filter.as_ref().map(|w| self.predicate(w, &scope)).transpose()?;
        Ok(BoundStatement::Update(BoundUpdate {
            table: u.table.clone(),
            sets,
            filter,
        }))
    }

    fn insert(&self, i: &ast::Insert) -> Result<BoundStatement> {
        let schema = self.catalog.table_schema(&i.table)?;
        let arity_err = |found| Error::ArityMismatch {
            table: i.table.clone(),
            expected: schema.arity(),
            found,
        };
        let source = match &i.source {
            ast::InsertSource::Values(rows) => {
                let empty = Scope::default();
                let mut out = Vec::new();
                for row in rows {
                    if row.len() != schema.arity() {
                        return Err(arity_err(row.len()));
                    }
                    let mut r = Vec::new();
                    for (e, c) in row.iter().zip(&schema.columns) {
                        let (se, k) = self.value(e, &empty)?;
                        r.push(assign(se, k, c.kind, &c.name)?);
                    }
                    out.push(r);
                }
                BoundInsertSource::Values(out)
            }
            ast::InsertSource::Query(q) => {
                let bq = self.query(q)?;
                if bq.columns.len() != schema.arity() {
                    return Err(arity_err(bq.columns.len()));
                }
                let mut casts = Vec::new();
                for (oc, c) in bq.columns.iter().zip(&schema.columns) {
                    let e = assign(ScalarExpr::Column(0), oc.kind, c.kind, &c.name)?;
                    casts.push(match e {
                        ScalarExpr::Cast(_, k) => Some(k),
                        _ => None,
                    });
                }
                BoundInsertSource::Query(bq, casts)
            }
        };
        Ok(BoundStatement::Insert(BoundInsert {
            table: i.table.clone(),
            source,
        }))
    }

    fn query(&self, q: &ast::Query) -> Result<BoundQuery> {
        let mut scope: Vec<(String, Vec<OutColumn>)> = Vec::new();
        let mut ctes = Vec::new();
        for (name, cq) in &q.ctes {
            if scope.iter().any(|(n, _)| n == name) {
                return Err(Error::Unsupported(format!("CTE '{name}' defined twice")));
            }
            let b = self.query_in(cq, &scope)?;
            scope.push((name.clone(), b.columns.clone()));
            ctes.push(b);
        }
        let mut out = self.query_in(&ast::Query { ctes: Vec::new(), branches: q.branches.clone() }, &scope)?;
        out.ctes = ctes;
        Ok(out)
    }

    fn query_in(&self, q: &ast::Query, ctes: &[(String, Vec<OutColumn>)]) -> Result<BoundQuery> {
        if !q.ctes.is_empty() {
            return Err(Error::Unsupported("WITH is only supported at the top level of a statement".into()));
        }
        let mut branches = Vec::new();
        let mut kinds: Vec<Option<ValueKind>> = Vec::new();
        let mut names = Vec::new();
        for (n, core) in q.branches.iter().enumerate() {
            let (b, cols) = self.select(core, ctes)?;
            if n == 0 {
                kinds = cols.iter().map(|c| c.kind).collect();
                names = cols.iter().map(|c| c.name.clone()).collect();
            } else {
                if cols.len() != kinds.len() {
                    return Err(Error::TypeMismatch(format!(
                        "UNION ALL branches have {} and {} columns",
                        kinds.len(),
                        cols.len()
                    )));
                }
                for (k, c) in kinds.iter_mut().zip(&cols) {
                    *k = unify(*k, c.kind, "UNION ALL column")?;
                }
            }
            branches.push((b, cols));
        }
        // Widen every branch to the unified kinds.
        let branches = branches
            .into_iter()
            .map(|(mut b, cols)| {
                for ((item, c), k) in b.items.iter_mut().zip(&cols).zip(&kinds) {
                    item.1 = widen(item.1.clone(), c.kind, *k);
                }
                b
            })
            .collect();
        Ok(BoundQuery {
            ctes: Vec::new(),
            branches,
            columns: names
                .into_iter()
                .zip(kinds)
                .map(|(name, kind)| OutColumn { name, kind })
                .collect(),
        })
    }

    fn source(&self, t: &ast::TableRef, ctes: &[(String, Vec<OutColumn>)]) -> Result<(BoundSource, Vec<OutColumn>)> {
        match &t.source {
            TableSource::Named { name, as_of: None } if ctes.iter().any(|(n, _)| n == name) => {
                let index = ctes.iter().position(|(n, _)| n == name).unwrap();
                let cols = ctes[index].1.clone();
                Ok((
                    BoundSource::Cte {
                        alias: t.alias.clone().unwrap_or_else(|| name.clone()),
                        index,
                        arity: cols.len(),
                    },
                    cols,
                ))
            }
            TableSource::Named { name, as_of } => {
                let schema = self.catalog.table_schema(name)?;
                let as_of = match as_of {
                    None => None,
                    Some(ast::AsOf::Scn(s)) => Some(Scn(*s)),
                    Some(ast::AsOf::Timestamp(ts)) => Some(self.catalog.resolve_timestamp(ts)?),
                };
                let cols = schema
                    .columns
                    .iter()
                    .map(|c| OutColumn {
                        name: c.name.clone(),
                        kind: Some(c.kind),
                    })
                    .collect();
                Ok((
                    BoundSource::Table {
                        name: name.clone(),
                        alias: t.alias.clone().unwrap_or_else(|| name.clone()),
                        as_of,
                        arity: schema.arity(),
                    },
                    cols,
                ))
            }
            TableSource::Derived(q) => {
                let bq = self.query_in(q, ctes)?;
                let alias = t
                    .alias
                    .clone()
                    .ok_or_else(|| Error::Unsupported("derived table without alias".into()))?;
                let cols = bq.columns.clone();
                Ok((
                    BoundSource::Derived {
                        alias,
                        query: Box::new(bq),
                    },
                    cols,
                ))
            }
        }
    }

    fn select(&self, core: &ast::SelectCore, ctes: &[(String, Vec<OutColumn>)]) -> Result<(BoundSelect, Vec<OutColumn>)> {
        let mut scope = Scope::default();
        let mut from = None;
        if let Some(f) = &core.from {
            let (first, cols) = self.source(&f.first, ctes)?;
            let mut aliases = vec![alias_of(&first).to_string()];
            scope.items.push(ScopeItem {
                alias: alias_of(&first).to_string(),
                columns: cols,
                offset: 0,
                rowid: Some(Side::Left),
            });
            let mut width = first.width();
            let mut joins = Vec::new();
            for j in &f.joins {
                let (src, cols) = self.source(&j.item, ctes)?;
                let alias = alias_of(&src).to_string();
                if aliases.contains(&alias) {
                    return Err(Error::Unsupported(format!("table alias '{alias}' used twice in FROM")));
                }
                aliases.push(alias.clone());
                scope.items.push(ScopeItem {
                    alias,
                    columns: cols,
                    offset: width,
                    rowid: Some(Side::Right),
                });
                let on = match (&j.on, j.kind) {
                    (_, JoinKind::Cross) => None,
                    (Some(on), _) => Some(self.predicate(on, &scope)?),
                    (None, _) => return Err(Error::Unsupported("join without ON".into())),
                };
                let right = scope.items.pop().unwrap();
                match j.kind {
                    JoinKind::Cross | JoinKind::Inner => {
                        width += src.width();
                        for it in &mut scope.items {
                            it.rowid = None;
                        }
                        scope.items.push(ScopeItem { rowid: None, ..right });
                    }
                    JoinKind::LeftSemi | JoinKind::LeftAnti => {}
                }
                joins.push(BoundJoin {
                    kind: j.kind,
                    source: src,
                    on,
                });
            }
            from = Some(BoundFrom { first, joins });
        }
        let filter = core.filter.as_ref().map(|w| self.predicate(w, &scope)).transpose()?;
        let mut items = Vec::new();
        let mut cols = Vec::new();
        for it in &core.items {
            match it {
                SelectItem::Wildcard | SelectItem::QualifiedWildcard(_) => {
                    let q = match it {
                        SelectItem::QualifiedWildcard(q) => Some(q.as_str()),
                        _ => None,
                    };
                    let mut any = false;
                    for s in &scope.items {
                        if q.is_some_and(|q| q != s.alias) {
                            continue;
                        }
                        any = true;
                        for (i, c) in s.columns.iter().enumerate() {
                            items.push((c.name.clone(), ScalarExpr::Column(s.offset + i)));
                            cols.push(c.clone());
                        }
                    }
                    if !any {
                        return Err(match q {
                            Some(q) => Error::UnknownTable(q.to_string()),
                            None => Error::Unsupported("SELECT * without FROM".into()),
                        });
                    }
                }
                SelectItem::Expr { expr, alias } => {
                    let (se, kind) = self.value(expr, &scope)?;
                    let name = alias.clone().unwrap_or_else(|| match expr {
                        Expr::Column { name, .. } => name.clone(),
                        Expr::RowId { .. } => "rowid".into(),
                        _ => format!("col{}", items.len() + 1),
                    });
                    items.push((name.clone(), se));
                    cols.push(OutColumn { name, kind });
                }
            }
        }
        Ok((BoundSelect { from, filter, items }, cols))
    }

    fn predicate(&self, e: &Expr, scope: &Scope) -> Result<ScalarExpr> {
        match self.expr(e, scope)? {
            (se, Ty::Bool) => Ok(se),
            (_, Ty::Val(_)) => Err(Error::TypeMismatch(format!("expected a condition, found value expression {e}"))),
        }
    }

    fn value(&self, e: &Expr, scope: &Scope) -> Result<(ScalarExpr, Option<ValueKind>)> {
        match self.expr(e, scope)? {
            (se, Ty::Val(k)) => Ok((se, k)),
            (_, Ty::Bool) => Err(Error::TypeMismatch(format!("expected a value, found condition {e}"))),
        }
    }

    fn expr(&self, e: &Expr, scope: &Scope) -> Result<(ScalarExpr, Ty)> {
        use ValueKind::*;
        Ok(match e {
            Expr::Column { qualifier, name } => {
                let (i, k) = scope.resolve(qualifier.as_deref(), name)?;
                (ScalarExpr::Column(i), Ty::Val(k))
            }
            Expr::RowId { qualifier } => (ScalarExpr::RowId(scope.rowid(qualifier.as_deref())?), Ty::Val(Some(Int))),
            Expr::Literal(v) => (ScalarExpr::Literal(v.clone()), Ty::Val(v.kind())),
            Expr::Param(p) => return Err(Error::UnboundParameter(p.clone())),
            Expr::Binary { op, left, right } => match op {
                BinOp::And | BinOp::Or => {
                    let l = self.predicate(left, scope)?;
                    let r = self.predicate(right, scope)?;
                    let se = if *op == BinOp::And {
                        ScalarExpr::and(l, r)
                    } else {
                        ScalarExpr::or(l, r)
                    };
                    (se, Ty::Bool)
                }
                BinOp::Cmp(c) => {
                    let (l, lk) = self.value(left, scope)?;
                    let (r, rk) = self.value(right, scope)?;
                    unify(lk, rk, &format!("comparison {e}"))?;
                    (ScalarExpr::cmp(*c, l, r), Ty::Bool)
                }
                BinOp::Arith(a) => {
                    let (l, lk) = self.value(left, scope)?;
                    let (r, rk) = self.value(right, scope)?;
                    for k in [lk, rk].into_iter().flatten() {
                        if !k.is_numeric() {
                            return Err(Error::TypeMismatch(format!(
                                "cannot apply {} to {} and {}",
                                a.symbol(),
                                lk.map_or("NULL".into(), |k| k.to_string()),
                                rk.map_or("NULL".into(), |k| k.to_string())
                            )));
                        }
                    }
                    (ScalarExpr::arith(*a, l, r), Ty::Val(unify(lk, rk, "arithmetic")?))
                }
            },
            Expr::Not(x) => (ScalarExpr::not(self.predicate(x, scope)?), Ty::Bool),
            Expr::Neg(x) => {
                let (se, k) = self.value(x, scope)?;
                if k.is_some_and(|k| !k.is_numeric()) {
                    return Err(Error::TypeMismatch(format!("cannot negate {}", k.unwrap())));
                }
                (ScalarExpr::Neg(Box::new(se)), Ty::Val(k))
            }
            Expr::Case { whens, otherwise } => {
                let mut kind = None;
                let mut arms = Vec::new();
                for (c, v) in whens {
                    let c = self.predicate(c, scope)?;
                    let (v, k) = self.value(v, scope)?;
                    kind = unify(kind, k, "CASE branches")?;
                    arms.push((c, v, k));
                }
                let other = match otherwise {
                    Some(o) => {
                        let (v, k) = self.value(o, scope)?;
                        kind = unify(kind, k, "CASE branches")?;
                        Some((v, k))
                    }
                    None => None,
                };
                (
                    ScalarExpr::Case {
                        whens: arms.into_iter().map(|(c, v, k)| (c, widen(v, k, kind))).collect(),
                        otherwise: other.map(|(v, k)| Box::new(widen(v, k, kind))),
                    },
                    Ty::Val(kind),
                )
            }
            Expr::Cast { expr, kind } => {
                let (se, k) = self.value(expr, scope)?;
                if let Some(k) = k {
                    if k.is_numeric() != kind.is_numeric() {
                        return Err(Error::TypeMismatch(format!("cannot cast {k} to {kind}")));
                    }
                }
                (ScalarExpr::Cast(Box::new(se), *kind), Ty::Val(Some(*kind)))
            }
        })
    }
}

fn alias_of(s: &BoundSource) -> &str {
    match s {
        BoundSource::Table { alias, .. } | BoundSource::Derived { alias, .. } | BoundSource::Cte { alias, .. } => alias,
    }
}
