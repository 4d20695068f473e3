//! Direct (nested-loop) evaluation of resolved queries.
//!
//! This is the engine's native execution path. It shares only the scalar
//! expression evaluator with the algebra layer, which makes it usable as an
//! independent oracle for reenactment and provenance.

use crate::algebra::VersionRef;
use crate::error::Result;
use crate::expr::RowCtx;
use crate::sql::analyze::{BoundFrom, BoundQuery, BoundSelect, BoundSource};
use crate::sql::ast::JoinKind;
use crate::storage::{RowId, Scn};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NRow {
    pub id: Option<RowId>,
    pub values: Vec<Value>,
    /// One slot per contributing base-table access.
    pub prov: Vec<Option<VersionRef>>,
}

/// Supplies the rows of the `n`-th base-table access (depth-first FROM
/// order, common table expressions expanded at each reference).
pub type SourceFn<'a> = dyn FnMut(usize, &str, Option<Scn>) -> Result<Vec<NRow>> + 'a;

pub fn run_query(q: &BoundQuery, src: &mut SourceFn<'_>) -> Result<Vec<NRow>> {
    let mut counter = 0;
    query(q, &q.ctes, src, &mut counter)
}

/// Number of provenance slots of a query's output rows.
pub fn prov_width(q: &BoundQuery) -> usize {
    width(q, &q.ctes)
}

fn width(q: &BoundQuery, ctes: &[BoundQuery]) -> usize {
    q.branches
        .iter()
        .map(|b| match &b.from {
            None => 0,
            Some(f) => {
                let mut w = source_width(&f.first, ctes);
                for j in &f.joins {
                    if matches!(j.kind, JoinKind::Inner | JoinKind::Cross) {
                        w += source_width(&j.source, ctes);
                    }
                }
                w
            }
        })
        .sum()
}

fn source_width(s: &BoundSource, ctes: &[BoundQuery]) -> usize {
    match s {
        BoundSource::Table { .. } => 1,
        BoundSource::Derived { query, .. } => width(query, ctes),
        BoundSource::Cte { index, .. } => width(&ctes[*index], ctes),
    }
}

fn query(q: &BoundQuery, ctes: &[BoundQuery], src: &mut SourceFn<'_>, counter: &mut usize) -> Result<Vec<NRow>> {
    let widths: Vec<usize> = q
        .branches
        .iter()
        .map(|b| {
            width(
                &BoundQuery {
                    ctes: Vec::new(),
                    branches: vec![b.clone()],
                    columns: Vec::new(),
                },
                ctes,
            )
        })
        .collect();
    let total: usize = widths.iter().sum();
    let mut out = Vec::new();
    let mut offset = 0;
    for (b, w) in q.branches.iter().zip(&widths) {
        for mut r in select(b, ctes, src, counter)? {
            let mut prov = vec![None; offset];
            prov.append(&mut r.prov);
            prov.resize(total, None);
            r.prov = prov;
            out.push(r);
        }
        offset += w;
    }
    Ok(out)
}

fn select(b: &BoundSelect, ctes: &[BoundQuery], src: &mut SourceFn<'_>, counter: &mut usize) -> Result<Vec<NRow>> {
    let rows = match &b.from {
        None => vec![NRow {
            id: None,
            values: Vec::new(),
            prov: Vec::new(),
        }],
        Some(f) => from(f, ctes, src, counter)?,
    };
    let mut out = Vec::new();
    for r in rows {
        let ctx = RowCtx::single(&r.values, r.id);
        if let Some(p) = &b.filter {
            if !p.eval_bool(&ctx)? {
                continue;
            }
        }
        let values = b.items.iter().map(|(_, e)| e.eval(&ctx)).collect::<Result<Vec<_>>>()?;
        out.push(NRow {
            id: r.id,
            values,
            prov: r.prov,
        });
    }
    Ok(out)
}

fn from(f: &BoundFrom, ctes: &[BoundQuery], src: &mut SourceFn<'_>, counter: &mut usize) -> Result<Vec<NRow>> {
    let mut acc = source(&f.first, ctes, src, counter)?;
    for j in &f.joins {
        let right = source(&j.source, ctes, src, counter)?;
        let matches = |l: &NRow, r: &NRow| -> Result<bool> {
            match &j.on {
                Some(p) => p.eval_bool(&RowCtx::pair(&l.values, &r.values, [l.id, r.id])),
                None => Ok(true),
            }
        };
        let mut next = Vec::new();
        for l in acc {
            match j.kind {
                JoinKind::Inner | JoinKind::Cross => {
                    for r in &right {
                        if matches(&l, r)? {
                            let mut values = l.values.clone();
                            values.extend(r.values.iter().cloned());
                            let mut prov = l.prov.clone();
                            prov.extend(r.prov.iter().cloned());
                            next.push(NRow { id: None, values, prov });
                        }
                    }
                }
                JoinKind::LeftSemi | JoinKind::LeftAnti => {
                    let mut found = false;
                    for r in &right {
                        if matches(&l, r)? {
                            found = true;
                            break;
                        }
                    }
                    if found == (j.kind == JoinKind::LeftSemi) {
                        next.push(l);
                    }
                }
            }
        }
        acc = next;
    }
    Ok(acc)
}

fn source(s: &BoundSource, ctes: &[BoundQuery], src: &mut SourceFn<'_>, counter: &mut usize) -> Result<Vec<NRow>> {
    match s {
        BoundSource::Table { name, as_of, .. } => {
            let n = *counter;
            *counter += 1;
            src(n, name, *as_of)
        }
        BoundSource::Derived { query: q, .. } => query(q, ctes, src, counter),
        BoundSource::Cte { index, .. } => query(&ctes[*index], ctes, src, counter),
    }
}
