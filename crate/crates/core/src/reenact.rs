//! Reenactment: a transaction's statements replayed as algebra over
//! time-travel snapshots.
//!
//! For every table the transaction touches, statement `i` sees
//! `Overlay(Snapshot(read_i), Snapshot(read_{i-1}), state_{i-1})`: the
//! committed snapshot of its read SCN with the transaction's own writes so far
//! laid over it. The statement's rewrite applied to that read view is the
//! table's state after statement `i`.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::Serialize;

use crate::algebra::codegen::to_sql;
use crate::algebra::translate::translate_query;
use crate::algebra::{ConstRow, IdSource, Mark, Rel};
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::expr::ScalarExpr;
use crate::sql::analyze::{analyze, BoundInsertSource, BoundStatement, Catalog};
use crate::sql::bind::{bind, BindParams};
use crate::sql::parser::parse;
use crate::storage::{RowId, Scn, TxnId};
use crate::txn::{IsolationLevel, TxnState};
use crate::value::CmpOp;

/// One statement to reenact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StmtSpec {
    pub sql_text: String,
    pub binds: BindParams,
    pub stmt_scn: Scn,
    /// SCN of the committed snapshot the statement reads.
    pub read_scn: Scn,
    /// Ids the original execution gave to inserted rows; `None` assigns
    /// fresh ids.
    pub inserted: Option<Vec<RowId>>,
}

/// What a plan is built from: the statement list plus the base snapshots.
pub struct PlanSource<'a> {
    pub xid: TxnId,
    pub isolation: IsolationLevel,
    pub begin_scn: Scn,
    pub statements: Vec<StmtSpec>,
    pub catalog: &'a dyn Catalog,
    /// Replacement base relation per table (what-if data edits).
    pub replaced: BTreeMap<String, Rel>,
    /// First fresh row id per table (what-if inserts).
    pub fresh_ids: BTreeMap<String, u64>,
    /// Report statement errors with their scenario index.
    pub scenario: bool,
}

#[derive(Debug, Clone)]
pub struct ReenactedStatement {
    pub index: u32,
    pub spec: StmtSpec,
    pub bound: BoundStatement,
    /// The statement's own output: the rewritten target table, or the query
    /// result of a SELECT.
    pub output: Rel,
}

#[derive(Debug, Clone)]
pub struct ReenactmentPlan {
    pub xid: TxnId,
    pub isolation: IsolationLevel,
    pub begin_scn: Scn,
    pub up_to: Option<u32>,
    pub statements: Vec<ReenactedStatement>,
    /// Tables read or written without AS OF, in first-use order.
    pub tables: Vec<String>,
    read_views: BTreeMap<String, Vec<Rel>>,
    states: BTreeMap<String, Vec<Rel>>,
}

/// Per-statement SQL rendered from the plan.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StatementSql {
    pub index: u32,
    pub sql_text: String,
    pub table: Option<String>,
    pub reenactment_sql: String,
}

impl ReenactmentPlan {
    /// Read view of `table` seen by statement `i`.
    pub fn read_view(&self, table: &str, i: u32) -> Option<&Rel> {
        self.read_views.get(table)?.get(i as usize)
    }

    /// State of `table` after statement `i`.
    pub fn state_after(&self, table: &str, i: u32) -> Option<&Rel> {
        self.states.get(table)?.get(i as usize)
    }

    /// State of `table` after the last reenacted statement.
    pub fn final_state(&self, table: &str) -> Option<&Rel> {
        self.states.get(table)?.last()
    }

    /// Tables written by at least one statement.
    pub fn written_tables(&self) -> Vec<String> {
        self.tables
            .iter()
            .filter(|t| self.statements.iter().any(|s| s.bound.target_table() == Some(t.as_str())))
            .cloned()
            .collect()
    }

    pub fn statement_sql(&self) -> Result<Vec<StatementSql>> {
        self.statements
            .iter()
            .map(|s| {
                Ok(StatementSql {
                    index: s.index,
                    sql_text: s.spec.sql_text.clone(),
                    table: s.bound.target_table().map(str::to_string),
                    reenactment_sql: to_sql(&s.output)?,
                })
            })
            .collect()
    }
}

/// Statement list of a logged transaction.
pub fn logged_statements(engine: &Engine, xid: TxnId) -> Result<Vec<StmtSpec>> {
    let rec = engine.txn(xid)?;
    Ok(engine
        .log()
        .statements_of(xid)
        .into_iter()
        .map(|e| StmtSpec {
            sql_text: e.sql_text.clone(),
            binds: e.binds.clone(),
            stmt_scn: e.stmt_scn,
            read_scn: rec.read_scn(e.stmt_scn),
            inserted: Some(e.inserted_row_ids.clone()),
        })
        .collect())
}

/// Reenacts a committed transaction, or its first `up_to + 1` statements.
pub fn reenact_transaction(engine: &Engine, xid: TxnId, up_to: Option<u32>) -> Result<ReenactmentPlan> {
    let rec = engine.txn(xid)?;
    match rec.state {
        TxnState::Committed => {}
        TxnState::Aborted => return Err(Error::AbortedTxn(xid)),
        TxnState::Active => return Err(Error::TxnNotActive(xid)),
    }
    let mut statements = logged_statements(engine, xid)?;
    if let Some(u) = up_to {
        if u as usize >= statements.len() {
            return Err(Error::InvalidRange {
                from: Scn(0),
                to: Scn(u as u64),
            });
        }
        statements.truncate(u as usize + 1);
    }
    let mut plan = build_plan(
        engine,
        PlanSource {
            xid,
            isolation: rec.isolation,
            begin_scn: rec.begin_scn,
            statements,
            catalog: engine,
            replaced: BTreeMap::new(),
            fresh_ids: BTreeMap::new(),
            scenario: false,
        },
    )?;
    plan.up_to = up_to;
    Ok(plan)
}

/// Read view of `table` for statement `stmt` of `xid`.
pub fn read_view_expr(engine: &Engine, table: &str, xid: TxnId, stmt: u32) -> Result<Rel> {
    engine.storage().schema(table)?;
    let plan = reenact_transaction(engine, xid, Some(stmt))?;
    match plan.read_view(table, stmt) {
        Some(r) => Ok(r.clone()),
        None => {
            // A table the prefix never touches: its snapshot is the view.
            let spec = &plan.statements[stmt as usize].spec;
            Ok(Rel::table_access(engine.storage().schema(table)?, spec.read_scn))
        }
    }
}

/// Evaluates an ad-hoc query over the read views of statement `stmt` of
/// `xid`: what that statement saw.
pub fn query_read_view(engine: &Engine, xid: TxnId, stmt: u32, sql: &str) -> Result<crate::algebra::Relation> {
    let plan = reenact_transaction(engine, xid, Some(stmt))?;
    let read_scn = plan.statements[stmt as usize].spec.read_scn;
    let q = crate::sql::parser::parse_query(sql)?;
    let q = crate::sql::analyze::analyze_query(&q, engine)?;
    let rel = translate_query(&q, &mut |t, as_of| match (as_of, plan.read_view(t, stmt)) {
        (None, Some(rv)) => Ok(Rel::access(rv.clone())),
        (as_of, _) => Ok(Rel::table_access(engine.storage().schema(t)?, as_of.unwrap_or(read_scn))),
    })?;
    crate::algebra::evaluate(engine.storage(), &rel, engine.config().mode)
}

/// Parses, translates and evaluates a query such as a generated
/// reenactment query. Tables without AS OF are read at the current SCN.
pub fn evaluate_sql(engine: &Engine, sql: &str) -> Result<crate::algebra::Relation> {
    let q = crate::sql::parser::parse_query(sql)?;
    let q = crate::sql::analyze::analyze_query(&q, engine)?;
    let now = engine.storage().current_scn();
    let rel = translate_query(&q, &mut |t, as_of| {
        Ok(Rel::table_access(engine.storage().schema(t)?, as_of.unwrap_or(now)))
    })?;
    crate::algebra::evaluate(engine.storage(), &rel, engine.config().mode)
}

fn prepare(spec: &StmtSpec, catalog: &dyn Catalog) -> Result<BoundStatement> {
    let stmt = parse(&spec.sql_text)?;
    let bound = analyze(&bind(&stmt, &spec.binds)?, catalog)?;
    match bound {
        BoundStatement::ProvenanceOfQuery(_) | BoundStatement::ProvenanceOfTransaction(_) => {
            Err(Error::Unsupported("PROVENANCE is not a transaction statement".into()))
        }
        b => Ok(b),
    }
}

/// Builds a plan from an explicit statement list.
pub fn build_plan(engine: &Engine, src: PlanSource<'_>) -> Result<ReenactmentPlan> {
    let bound: Vec<BoundStatement> = src
        .statements
        .iter()
        .enumerate()
        .map(|(i, s)| prepare(s, src.catalog).map_err(|e| scenario_error(&src, i, e)))
        .collect::<Result<_>>()?;
    let mut tables: Vec<String> = Vec::new();
    for b in &bound {
        for t in b.tables_read() {
            if !tables.contains(&t) {
                tables.push(t);
            }
        }
    }
    let mut snaps: HashMap<(String, Scn), Rel> = HashMap::new();
    let mut snapshot = |t: &str, scn: Scn| -> Result<Rel> {
        if let Some(r) = src.replaced.get(t) {
            return Ok(r.clone());
        }
        if let Some(r) = snaps.get(&(t.to_string(), scn)) {
            return Ok(r.clone());
        }
        let r = Rel::table_access(engine.storage().schema(t)?, scn);
        snaps.insert((t.to_string(), scn), r.clone());
        Ok(r)
    };
    let mut read_views: BTreeMap<String, Vec<Rel>> = BTreeMap::new();
    let mut states: BTreeMap<String, Vec<Rel>> = BTreeMap::new();
    let mut out = Vec::new();
    for (i, (spec, b)) in src.statements.iter().zip(bound).enumerate() {
        let idx = i as u32;
        let mut inputs: BTreeMap<&str, Rel> = BTreeMap::new();
        for t in &tables {
            let base = snapshot(t, spec.read_scn)?;
            let rv = match states.get(t).and_then(|s| s.last()) {
                Some(prev) => {
                    let prior = snapshot(t, src.statements[i - 1].read_scn)?;
                    Rel::overlay(base, prior, prev.clone(), src.xid)?
                }
                None => base,
            };
            read_views.entry(t.clone()).or_default().push(rv.clone());
            inputs.insert(t, Rel::access(rv));
        }
        let output = rewrite(engine, &src, &b, idx, spec, &inputs).map_err(|e| scenario_error(&src, i, e))?;
        for t in &tables {
            let next = if b.target_table() == Some(t.as_str()) {
                output.clone()
            } else {
                inputs[t.as_str()].clone()
            };
            states.entry(t.clone()).or_default().push(next);
        }
        out.push(ReenactedStatement {
            index: idx,
            spec: spec.clone(),
            bound: b,
            output,
        });
    }
    Ok(ReenactmentPlan {
        xid: src.xid,
        isolation: src.isolation,
        begin_scn: src.begin_scn,
        up_to: None,
        statements: out,
        tables,
        read_views,
        states,
    })
}

fn scenario_error(src: &PlanSource<'_>, index: usize, e: Error) -> Error {
    if src.scenario {
        Error::Scenario {
            index,
            source: Box::new(e),
        }
    } else {
        e
    }
}

/// The rewrite of one statement over its read views.
fn rewrite(
    engine: &Engine,
    src: &PlanSource<'_>,
    b: &BoundStatement,
    idx: u32,
    spec: &StmtSpec,
    inputs: &BTreeMap<&str, Rel>,
) -> Result<Rel> {
    let mut resolve = |t: &str, as_of: Option<Scn>| -> Result<Rel> {
        match as_of {
            Some(scn) => Ok(Rel::table_access(engine.storage().schema(t)?, scn)),
            None => Ok(inputs[t].clone()),
        }
    };
    Ok(match b {
        BoundStatement::Select(q) => translate_query(q, &mut resolve)?,
        BoundStatement::Update(u) => {
            let input = inputs[u.table.as_str()].clone();
            let schema = engine.storage().schema(&u.table)?;
            let items = schema
                .columns
                .iter()
                .enumerate()
                .map(|(j, c)| {
                    let e = match u.sets.iter().find(|(k, _)| *k == j) {
                        None => ScalarExpr::col(j),
                        Some((_, set)) => match &u.filter {
                            None => set.clone(),
                            Some(theta) => ScalarExpr::Case {
                                whens: vec![(theta.clone(), set.clone())],
                                otherwise: Some(Box::new(ScalarExpr::col(j))),
                            },
                        },
                    };
                    (c.name.clone(), e)
                })
                .collect();
            Rel::project_marked(
                input,
                items,
                Some(Mark {
                    pred: u.filter.clone(),
                    xid: src.xid,
                    stmt: idx,
                    table: Arc::from(u.table.as_str()),
                }),
            )
        }
        BoundStatement::Delete(d) => {
            let input = inputs[d.table.as_str()].clone();
            let keep = match &d.filter {
                Some(theta) => ScalarExpr::not(theta.clone()),
                None => ScalarExpr::cmp(CmpOp::Eq, ScalarExpr::lit(1), ScalarExpr::lit(0)),
            };
            Rel::select(input, keep)
        }
        BoundStatement::Insert(ins) => {
            let input = inputs[ins.table.as_str()].clone();
            let schema = engine.storage().schema(&ins.table)?;
            let rows = match &ins.source {
                BoundInsertSource::Values(rows) => {
                    let ctx = crate::expr::RowCtx::single(&[], None);
                    let rows = rows
                        .iter()
                        .map(|r| {
                            let values = r.iter().map(|e| e.eval(&ctx)).collect::<Result<Vec<_>>>()?;
                            Ok(ConstRow {
                                id: None,
                                values: schema.conform(values)?,
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Rel::const_rel(input.columns().to_vec(), rows, None)?
                }
                BoundInsertSource::Query(q, casts) => {
                    let rel = translate_query(q, &mut resolve)?;
                    if casts.iter().any(Option::is_some) {
                        let items = rel
                            .columns()
                            .iter()
                            .zip(casts)
                            .enumerate()
                            .map(|(j, (c, k))| {
                                let e = match k {
                                    Some(k) => ScalarExpr::Cast(Box::new(ScalarExpr::col(j)), *k),
                                    None => ScalarExpr::col(j),
                                };
                                (c.name.clone(), e)
                            })
                            .collect();
                        Rel::project(rel, items)
                    } else {
                        rel
                    }
                }
            };
            let ids = match &spec.inserted {
                Some(ids) => IdSource::Recorded(ids.clone()),
                None => IdSource::Fresh(
                    src.fresh_ids
                        .get(&ins.table)
                        .copied()
                        .unwrap_or_else(|| engine.storage().table(&ins.table).map_or(1, |t| t.next_row_id().0))
                        + ((idx as u64 + 1) << 32),
                ),
            };
            let m = Rel::materialize(rows, schema, ids, src.xid, idx)?;
            Rel::union(input, m)?
        }
        BoundStatement::ProvenanceOfQuery(_) | BoundStatement::ProvenanceOfTransaction(_) => {
            return Err(Error::Unsupported("PROVENANCE is not a transaction statement".into()))
        }
    })
}
