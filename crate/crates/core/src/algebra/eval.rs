//! Memoized evaluation of algebra DAGs against a [`Storage`].

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use super::{ARow, ConstRow, Creator, IdSource, Mark, Op, Rel, Relation, VersionRef};
use crate::error::{Error, Result};
use crate::expr::{RowCtx, ScalarExpr, Side};
use crate::par::{self, ExecMode};
use crate::sql::ast::JoinKind;
use crate::storage::{RowId, Storage, TxnId};
use crate::value::{cmp_rows, CmpOp, JoinKey};

type Rows = Arc<Vec<ARow>>;

/// Evaluates plans, sharing results of common sub-plans across calls.
pub struct Evaluator<'s> {
    storage: &'s Storage,
    mode: ExecMode,
    // The plan handle is kept alongside its result so the pointer key stays
    // unique for the evaluator's lifetime.
    memo: HashMap<usize, (Rel, Rows)>,
}

impl<'s> Evaluator<'s> {
    pub fn new(storage: &'s Storage, mode: ExecMode) -> Evaluator<'s> {
        Evaluator {
            storage,
            mode,
            memo: HashMap::new(),
        }
    }

    pub fn storage(&self) -> &'s Storage {
        self.storage
    }

    /// Evaluates `rel` and returns its rows in canonical order.
    pub fn relation(&mut self, rel: &Rel) -> Result<Relation> {
        let mut rows = (*self.eval(rel)?).clone();
        sort_rows(self.mode, &mut rows);
        Ok(Relation {
            columns: rel.columns().to_vec(),
            rows,
        })
    }

    /// Evaluates `rel`; row order is unspecified.
    pub fn eval(&mut self, rel: &Rel) -> Result<Rows> {
        if let Some((_, rows)) = self.memo.get(&rel.key()) {
            return Ok(rows.clone());
        }
        let rows = Arc::new(self.compute(rel)?);
        self.memo.insert(rel.key(), (rel.clone(), rows.clone()));
        Ok(rows)
    }

    fn compute(&mut self, rel: &Rel) -> Result<Vec<ARow>> {
        let mode = self.mode;
        match rel.op() {
            Op::TableAccess { table, as_of } => {
                let name: Arc<str> = Arc::from(table.as_str());
                let versions = self.storage.scan_asof(table, *as_of)?;
                Ok(versions
                    .into_iter()
                    .map(|v| {
                        let version = VersionRef::Committed {
                            table: name.clone(),
                            row: v.row,
                            begin: v.begin,
                        };
                        ARow {
                            id: Some(v.row),
                            values: v.values.clone(),
                            creator: Some(Creator {
                                txn: v.creator_txn,
                                stmt: v.creator_stmt,
                            }),
                            affected: false,
                            prov: vec![Some(version.clone())],
                            version: Some(version),
                        }
                    })
                    .collect())
            }
            Op::Overlay {
                base,
                prior_base,
                running,
                xid,
            } => {
                let base = self.eval(base)?;
                let prior = self.eval(prior_base)?;
                let running = self.eval(running)?;
                Ok(overlay(&base, &prior, &running, *xid))
            }
            Op::Select { input, pred } => {
                let input = self.eval(input)?;
                par::try_filter_map(mode, &input, |r| {
                    Ok(pred.eval_bool(&RowCtx::single(&r.values, r.id))?.then(|| r.clone()))
                })
            }
            Op::Project { input, items, mark } => {
                let input = self.eval(input)?;
                par::try_map(mode, &input, |r| project_row(r, items, mark.as_ref()))
            }
            Op::Join {
                left,
                right,
                kind,
                pred,
            } => {
                let la = left.arity();
                let (lw, rw) = (left.prov_width(), right.prov_width());
                let l = self.eval(left)?;
                let r = self.eval(right)?;
                join(mode, &l, &r, la, lw, rw, *kind, pred.as_ref())
            }
            Op::Union { left, right } => {
                let (lw, rw) = (left.prov_width(), right.prov_width());
                let l = self.eval(left)?;
                let r = self.eval(right)?;
                let mut out = Vec::with_capacity(l.len() + r.len());
                for row in l.iter() {
                    let mut row = row.clone();
                    row.prov.resize(lw + rw, None);
                    out.push(row);
                }
                for row in r.iter() {
                    let mut row = row.clone();
                    let mut prov = vec![None; lw];
                    prov.append(&mut row.prov);
                    row.prov = prov;
                    out.push(row);
                }
                Ok(out)
            }
            Op::ConstRel { rows, origin } => Ok(rows
                .iter()
                .map(|ConstRow { id, values }| ARow {
                    id: *id,
                    values: values.clone(),
                    version: match (origin, id) {
                        (Some(t), Some(row)) => Some(VersionRef::Scenario {
                            table: t.clone(),
                            row: *row,
                        }),
                        _ => None,
                    },
                    creator: None,
                    affected: false,
                    prov: Vec::new(),
                })
                .collect()),
            Op::Materialize {
                input,
                table,
                ids,
                xid,
                stmt,
            } => {
                let mut rows = (*self.eval(input)?).clone();
                rows.sort_by(|a, b| cmp_rows(&a.values, &b.values).then_with(|| a.prov.cmp(&b.prov)));
                let ids: Vec<RowId> = match ids {
                    IdSource::Recorded(ids) => {
                        if ids.len() != rows.len() {
                            return Err(Error::Unsupported(format!(
                                "insert into {table} produced {} rows but {} ids were recorded",
                                rows.len(),
                                ids.len()
                            )));
                        }
                        let mut ids = ids.clone();
                        ids.sort();
                        ids
                    }
                    IdSource::Fresh(start) => (0..rows.len() as u64).map(|i| RowId(start + i)).collect(),
                };
                for (r, id) in rows.iter_mut().zip(ids) {
                    r.id = Some(id);
                    r.creator = Some(Creator {
                        txn: *xid,
                        stmt: Some(*stmt),
                    });
                    r.affected = true;
                    r.version = Some(VersionRef::Intra {
                        xid: *xid,
                        stmt: *stmt,
                        table: table.clone(),
                        row: id,
                    });
                }
                Ok(rows)
            }
            Op::Access { input } => {
                let input = self.eval(input)?;
                Ok(input
                    .iter()
                    .map(|r| ARow {
                        prov: vec![r.version.clone()],
                        affected: false,
                        ..r.clone()
                    })
                    .collect())
            }
        }
    }
}

/// Evaluates a single plan with a fresh evaluator.
pub fn evaluate(storage: &Storage, rel: &Rel, mode: ExecMode) -> Result<Relation> {
    Evaluator::new(storage, mode).relation(rel)
}

/// Canonical order: by carrier id (rows without one last), then values, then
/// provenance.
pub fn sort_rows(mode: ExecMode, rows: &mut [ARow]) {
    par::sort_by(mode, rows, |a, b| {
        let id = match (a.id, b.id) {
            (Some(x), Some(y)) => x.cmp(&y),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => Ordering::Equal,
        };
        id.then_with(|| cmp_rows(&a.values, &b.values))
            .then_with(|| a.prov.cmp(&b.prov))
    });
}

fn overlay(base: &[ARow], prior: &[ARow], running: &[ARow], xid: TxnId) -> Vec<ARow> {
    let own: Vec<&ARow> = running
        .iter()
        .filter(|r| r.creator.is_some_and(|c| c.txn == xid))
        .collect();
    let running_ids: HashSet<RowId> = running.iter().filter_map(|r| r.id).collect();
    let mut written: HashSet<RowId> = own.iter().filter_map(|r| r.id).collect();
    written.extend(prior.iter().filter_map(|r| r.id).filter(|id| !running_ids.contains(id)));
    let mut out: Vec<ARow> = own
        .into_iter()
        .map(|r| ARow {
            prov: Vec::new(),
            ..r.clone()
        })
        .collect();
    out.extend(
        base.iter()
            .filter(|r| r.id.is_none_or(|id| !written.contains(&id)))
            .map(|r| ARow {
                prov: Vec::new(),
                ..r.clone()
            }),
    );
    out.sort_by_key(|r| r.id);
    out
}

fn project_row(r: &ARow, items: &[(String, ScalarExpr)], mark: Option<&Mark>) -> Result<ARow> {
    let ctx = RowCtx::single(&r.values, r.id);
    let values = items.iter().map(|(_, e)| e.eval(&ctx)).collect::<Result<Vec<_>>>()?;
    let mut out = ARow {
        values,
        ..r.clone()
    };
    if let Some(m) = mark {
        let hit = match &m.pred {
            Some(p) => p.eval_bool(&ctx)?,
            None => true,
        };
        if hit {
            out.creator = Some(Creator {
                txn: m.xid,
                stmt: Some(m.stmt),
            });
            out.affected = true;
            out.version = r.id.map(|row| VersionRef::Intra {
                xid: m.xid,
                stmt: m.stmt,
                table: m.table.clone(),
                row,
            });
        }
    }
    Ok(out)
}

/// Which side(s) of a join an expression references.
fn sides(e: &ScalarExpr, left_arity: usize) -> (bool, bool) {
    let (mut l, mut r) = (false, false);
    e.visit(&mut |x| match x {
        ScalarExpr::Column(i) if *i < left_arity => l = true,
        ScalarExpr::Column(_) => r = true,
        ScalarExpr::RowId(Side::Left) => l = true,
        ScalarExpr::RowId(Side::Right) => r = true,
        _ => {}
    });
    (l, r)
}

/// Rewrites a right-only expression to evaluate against the right row alone.
fn to_right_local(e: &ScalarExpr, left_arity: usize) -> ScalarExpr {
    e.map(&|x| match x {
        ScalarExpr::Column(i) => Some(ScalarExpr::Column(i - left_arity)),
        ScalarExpr::RowId(Side::Right) => Some(ScalarExpr::RowId(Side::Left)),
        _ => None,
    })
}

/// Splits a join predicate into hashable equi-keys and a residual.
pub(crate) fn split_equi(
    pred: Option<&ScalarExpr>,
    left_arity: usize,
) -> (Vec<(ScalarExpr, ScalarExpr)>, Option<ScalarExpr>) {
    let Some(pred) = pred else {
        return (Vec::new(), None);
    };
    let mut keys = Vec::new();
    let mut rest = Vec::new();
    for c in pred.conjuncts() {
        if let ScalarExpr::Cmp(CmpOp::Eq, a, b) = c {
            match (sides(a, left_arity), sides(b, left_arity)) {
                ((true, false), (false, true)) => {
                    keys.push(((**a).clone(), to_right_local(b, left_arity)));
                    continue;
                }
                ((false, true), (true, false)) => {
                    keys.push(((**b).clone(), to_right_local(a, left_arity)));
                    continue;
                }
                _ => {}
            }
        }
        rest.push(c.clone());
    }
    (keys, ScalarExpr::conjunction(rest))
}

#[allow(clippy::too_many_arguments)]
fn join(
    mode: ExecMode,
    l: &[ARow],
    r: &[ARow],
    la: usize,
    lw: usize,
    rw: usize,
    kind: JoinKind,
    pred: Option<&ScalarExpr>,
) -> Result<Vec<ARow>> {
    let (keys, residual) = split_equi(pred, la);
    let key_of = |exprs: &mut dyn Iterator<Item = &ScalarExpr>, row: &ARow| -> Result<Vec<JoinKey>> {
        let ctx = RowCtx::single(&row.values, row.id);
        exprs.map(|e| e.eval(&ctx).map(|v| v.join_key())).collect()
    };
    let mut table: HashMap<Vec<JoinKey>, Vec<usize>> = HashMap::new();
    for (i, row) in r.iter().enumerate() {
        let k = key_of(&mut keys.iter().map(|(_, b)| b), row)?;
        table.entry(k).or_default().push(i);
    }
    let empty = Vec::new();
    let matches = |lrow: &ARow| -> Result<Vec<usize>> {
        let k = key_of(&mut keys.iter().map(|(a, _)| a), lrow)?;
        let cands = table.get(&k).unwrap_or(&empty);
        let mut out = Vec::new();
        for &i in cands {
            let rrow = &r[i];
            let ok = match &residual {
                Some(p) => p.eval_bool(&RowCtx::pair(&lrow.values, &rrow.values, [lrow.id, rrow.id]))?,
                None => true,
            };
            if ok {
                out.push(i);
                if matches!(kind, JoinKind::LeftSemi | JoinKind::LeftAnti) {
                    break;
                }
            }
        }
        Ok(out)
    };
    match kind {
        JoinKind::LeftSemi | JoinKind::LeftAnti => {
            let want = kind == JoinKind::LeftSemi;
            par::try_filter_map(mode, l, |lrow| {
                Ok((matches(lrow)?.is_empty() != want).then(|| lrow.clone()))
            })
        }
        JoinKind::Inner | JoinKind::Cross => par::try_flat_map(mode, l, |lrow| {
            Ok(matches(lrow)?
                .into_iter()
                .map(|i| {
                    let rrow = &r[i];
                    let mut values = lrow.values.clone();
                    values.extend(rrow.values.iter().cloned());
                    let mut prov = lrow.prov.clone();
                    prov.resize(lw, None);
                    prov.extend(rrow.prov.iter().cloned());
                    prov.resize(lw + rw, None);
                    ARow {
                        id: None,
                        values,
                        version: None,
                        creator: None,
                        affected: false,
                        prov,
                    }
                })
                .collect())
        }),
    }
}
