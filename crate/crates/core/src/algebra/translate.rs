//! Resolved queries to algebra.

use super::{Column, ConstRow, Rel};
use crate::error::Result;
use crate::sql::analyze::{BoundQuery, BoundSelect, BoundSource};
use crate::storage::Scn;

/// Translates a resolved query. `resolve` supplies the plan for each base
/// table reference (with its AS OF SCN, if any), in depth-first FROM order.
pub fn translate_query<F>(q: &BoundQuery, resolve: &mut F) -> Result<Rel>
where
    F: FnMut(&str, Option<Scn>) -> Result<Rel>,
{
    let mut ctes: Vec<Rel> = Vec::with_capacity(q.ctes.len());
    for c in &q.ctes {
        let rel = query(c, &ctes, resolve)?;
        ctes.push(rel);
    }
    query(q, &ctes, resolve)
}

fn query<F>(q: &BoundQuery, ctes: &[Rel], resolve: &mut F) -> Result<Rel>
where
    F: FnMut(&str, Option<Scn>) -> Result<Rel>,
{
    let mut out: Option<Rel> = None;
    for b in &q.branches {
        let rel = select(b, ctes, resolve)?;
        out = Some(match out {
            None => rel,
            Some(l) => Rel::union(l, rel)?,
        });
    }
    Ok(out.expect("a query has at least one branch"))
}

fn select<F>(b: &BoundSelect, ctes: &[Rel], resolve: &mut F) -> Result<Rel>
where
    F: FnMut(&str, Option<Scn>) -> Result<Rel>,
{
    let mut rel = match &b.from {
        None => Rel::const_rel(
            Vec::new(),
            vec![ConstRow {
                id: None,
                values: Vec::new(),
            }],
            None,
        )?,
        Some(from) => {
            let mut acc = source(&from.first, ctes, resolve)?;
            for j in &from.joins {
                let right = source(&j.source, ctes, resolve)?;
                acc = Rel::join(acc, right, j.kind, j.on.clone());
            }
            acc
        }
    };
    if let Some(f) = &b.filter {
        rel = Rel::select(rel, f.clone());
    }
    Ok(Rel::project(rel, b.items.clone()))
}

fn source<F>(s: &BoundSource, ctes: &[Rel], resolve: &mut F) -> Result<Rel>
where
    F: FnMut(&str, Option<Scn>) -> Result<Rel>,
{
    match s {
        BoundSource::Table { name, as_of, .. } => resolve(name, *as_of),
        BoundSource::Derived { query: q, .. } => query(q, ctes, resolve),
        BoundSource::Cte { index, .. } => Ok(ctes[*index].clone()),
    }
}

/// Output columns of a resolved query as algebra columns.
pub fn query_columns(q: &BoundQuery) -> Vec<Column> {
    q.columns
        .iter()
        .map(|c| Column {
            name: c.name.clone(),
            kind: c.kind,
        })
        .collect()
}
