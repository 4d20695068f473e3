//! Hypothetical replays of a past transaction.
//!
//! A scenario edits the transaction's initial data and/or its statement
//! list; the plan is rebuilt and evaluated without touching the engine.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::algebra::{Column, ConstRow, Rel};
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::provenance::{annotate, DebugOptions, DebugView};
use crate::reenact::{build_plan, logged_statements, PlanSource, StmtSpec};
use crate::sql::bind::BindParams;
use crate::storage::{RowId, TxnId};
use crate::txn::TxnState;
use crate::value::Value;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct WhatIfScenario {
    pub xid: TxnId,
    #[serde(default)]
    pub data_edits: Vec<DataEdit>,
    #[serde(default)]
    pub statement_edits: Vec<StatementEdit>,
    /// Include unaffected rows in the returned debug view.
    #[serde(default)]
    pub show_unaffected: bool,
}

/// Replacement contents of a table's initial read view.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DataEdit {
    pub table: String,
    pub rows: Vec<EditRow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct EditRow {
    /// Id of the existing row this replaces; new rows get fresh ids.
    #[serde(default)]
    pub row_id: Option<RowId>,
    pub values: Vec<Value>,
}

/// Statement edits refer to original statement indexes. Originals without an
/// edit are kept; `INSERT_AT i` places a statement before original `i` (or at
/// the end for `i` = statement count).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "SCREAMING_SNAKE_CASE", deny_unknown_fields)]
pub enum StatementEdit {
    Keep {
        index: u32,
    },
    Replace {
        index: u32,
        sql: String,
        #[serde(default)]
        binds: BindParams,
    },
    InsertAt {
        index: u32,
        sql: String,
        #[serde(default)]
        binds: BindParams,
    },
    Delete {
        index: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct WouldAbort {
    /// Index in the scenario's statement list.
    pub stmt_index: u32,
    pub conflicting_xid: TxnId,
    pub table: String,
    pub row_id: RowId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ColumnChange {
    pub column: String,
    pub old: Value,
    pub new: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ChangedRow {
    pub row_id: RowId,
    pub changes: Vec<ColumnChange>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RowValues {
    pub row_id: RowId,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TableDiff {
    pub only_in_original: Vec<RowValues>,
    pub only_in_scenario: Vec<RowValues>,
    pub changed: Vec<ChangedRow>,
}

impl TableDiff {
    pub fn is_empty(&self) -> bool {
        self.only_in_original.is_empty() && self.only_in_scenario.is_empty() && self.changed.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Divergence {
    pub tables: BTreeMap<String, TableDiff>,
}

impl Divergence {
    pub fn is_empty(&self) -> bool {
        self.tables.values().all(TableDiff::is_empty)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct WhatIfResult {
    pub debug_view: DebugView,
    pub divergence: Divergence,
    pub would_abort: Option<WouldAbort>,
}

/// Compares the final columns of two views, per table and row id.
pub fn diff_views(a: &DebugView, b: &DebugView) -> Result<Divergence> {
    let last = |v: &DebugView| v.columns.last().map(|c| c.tables.clone()).unwrap_or_default();
    let (ta, tb) = (last(a), last(b));
    let mut out = Divergence::default();
    let names: BTreeSet<&String> = ta.keys().chain(tb.keys()).collect();
    for name in names {
        let (x, y) = (ta.get(name), tb.get(name));
        if let (Some(x), Some(y)) = (x, y) {
            if x.columns != y.columns {
                return Err(Error::IncompatibleViews(format!(
                    "table {name} has columns ({}) vs ({})",
                    x.columns.join(", "),
                    y.columns.join(", ")
                )));
            }
        }
        let rows = |t: Option<&crate::provenance::TableView>| -> BTreeMap<RowId, Vec<Value>> {
            t.map(|t| t.rows.iter().map(|r| (r.row_id, r.values.clone())).collect())
                .unwrap_or_default()
        };
        let (rx, ry) = (rows(x), rows(y));
        let columns = x.or(y).map(|t| t.columns.clone()).unwrap_or_default();
        let mut d = TableDiff::default();
        for (id, v) in &rx {
            match ry.get(id) {
                None => d.only_in_original.push(RowValues {
                    row_id: *id,
                    values: v.clone(),
                }),
                Some(w) if w != v => d.changed.push(ChangedRow {
                    row_id: *id,
                    changes: columns
                        .iter()
                        .zip(v.iter().zip(w))
                        .filter(|(_, (o, n))| o != n)
                        .map(|(c, (o, n))| ColumnChange {
                            column: c.clone(),
                            old: o.clone(),
                            new: n.clone(),
                        })
                        .collect(),
                }),
                Some(_) => {}
            }
        }
        for (id, v) in &ry {
            if !rx.contains_key(id) {
                d.only_in_scenario.push(RowValues {
                    row_id: *id,
                    values: v.clone(),
                });
            }
        }
        out.tables.insert(name.clone(), d);
    }
    Ok(out)
}

/// The scenario's statement list. Statements keep their recorded row ids
/// only while the list and data are unchanged up to them.
fn scenario_statements(original: &[StmtSpec], sc: &WhatIfScenario) -> Result<Vec<StmtSpec>> {
    let n = original.len() as u32;
    let mut edits: BTreeMap<u32, &StatementEdit> = BTreeMap::new();
    let mut inserts: BTreeMap<u32, Vec<(&String, &BindParams)>> = BTreeMap::new();
    for e in &sc.statement_edits {
        match e {
            StatementEdit::InsertAt { index, sql, binds } => {
                if *index > n {
                    return Err(Error::InvalidScenario(format!(
                        "INSERT_AT {index} is past the end ({n} statements)"
                    )));
                }
                inserts.entry(*index).or_default().push((sql, binds));
            }
            StatementEdit::Keep { index } | StatementEdit::Replace { index, .. } | StatementEdit::Delete { index } => {
                if *index >= n {
                    return Err(Error::InvalidScenario(format!(
                        "statement {index} does not exist ({n} statements)"
                    )));
                }
                if edits.insert(*index, e).is_some() {
                    return Err(Error::InvalidScenario(format!("statement {index} is edited twice")));
                }
            }
        }
    }
    let mut unchanged = sc.data_edits.is_empty();
    let mut out = Vec::new();
    let fresh = |sql: &str, binds: &BindParams, like: &StmtSpec| StmtSpec {
        sql_text: sql.to_string(),
        binds: binds.clone(),
        stmt_scn: like.stmt_scn,
        read_scn: like.read_scn,
        inserted: None,
    };
    for i in 0..=n {
        // New statements read what the original statement at their position
        // read (the last one's view at the end).
        let like = original.get(i as usize).or(original.last());
        for (sql, binds) in inserts.get(&i).into_iter().flatten() {
            let like = like.ok_or_else(|| Error::InvalidScenario("transaction has no statements".into()))?;
            unchanged = false;
            out.push(fresh(sql, binds, like));
        }
        if i == n {
            break;
        }
        let orig = &original[i as usize];
        match edits.get(&i) {
            None | Some(StatementEdit::Keep { .. }) => {
                let mut s = orig.clone();
                if !unchanged {
                    s.inserted = None;
                }
                out.push(s);
            }
            Some(StatementEdit::Replace { sql, binds, .. }) => {
                unchanged = false;
                out.push(fresh(sql, binds, orig));
            }
            Some(_) => unchanged = false,
        }
    }
    Ok(out)
}

/// Replacement relations for edited tables.
fn edited_tables(engine: &Engine, sc: &WhatIfScenario) -> Result<BTreeMap<String, Rel>> {
    let mut out = BTreeMap::new();
    for e in &sc.data_edits {
        let schema = engine.storage().schema(&e.table)?;
        if out.contains_key(&e.table) {
            return Err(Error::InvalidScenario(format!("table {} is edited twice", e.table)));
        }
        let mut next = engine.storage().table(&e.table)?.next_row_id().0;
        let mut seen = BTreeSet::new();
        let mut rows = Vec::with_capacity(e.rows.len());
        for r in &e.rows {
            let id = match r.row_id {
                Some(id) => id,
                None => {
                    next += 1;
                    RowId(next - 1)
                }
            };
            if !seen.insert(id) {
                return Err(Error::InvalidScenario(format!("row {id} of {} appears twice", e.table)));
            }
            rows.push(ConstRow {
                id: Some(id),
                values: schema.conform(r.values.clone())?,
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
        out.insert(e.table.clone(), Rel::const_rel(columns, rows, Some(Arc::from(e.table.as_str())))?);
    }
    Ok(out)
}

pub fn run_whatif(engine: &Engine, sc: &WhatIfScenario) -> Result<WhatIfResult> {
    let rec = engine.txn(sc.xid)?;
    if rec.state == TxnState::Active {
        return Err(Error::TxnNotActive(sc.xid));
    }
    let original = logged_statements(engine, sc.xid)?;
    let statements = scenario_statements(&original, sc)?;
    let replaced = edited_tables(engine, sc)?;
    let plan = build_plan(
        engine,
        PlanSource {
            xid: sc.xid,
            isolation: rec.isolation,
            begin_scn: rec.begin_scn,
            statements,
            catalog: engine,
            replaced,
            fresh_ids: BTreeMap::new(),
            scenario: true,
        },
    )?;
    let scenario = annotate(engine, plan)?;
    let all = DebugOptions {
        show_unaffected: true,
        tables: None,
    };
    let mut divergence = Divergence::default();
    if rec.state == TxnState::Committed {
        let base = crate::reenact::reenact_transaction(engine, sc.xid, None)?;
        divergence = diff_views(&annotate(engine, base)?.debug_view(&all)?, &scenario.debug_view(&all)?)?;
    }

    // First-updater-wins against transactions concurrent with xid.
    let end = rec.finish_scn().expect("finished txn");
    let concurrent: Vec<_> = engine
        .transactions()
        .filter(|t| t.xid != sc.xid && t.state == TxnState::Committed)
        .filter(|t| t.begin_scn < end && t.commit_scn.is_some_and(|c| c > rec.begin_scn))
        .collect();
    let mut would_abort = None;
    'outer: for s in &scenario.plan.statements {
        let Some(table) = s.bound.target_table() else { continue };
        let before: BTreeMap<RowId, _> = scenario.columns[s.index as usize][table]
            .rows
            .iter()
            .filter_map(|r| r.id.map(|id| (id, r)))
            .collect();
        let after = &scenario.columns[s.index as usize + 1][table];
        let mut written: BTreeSet<RowId> = after.rows.iter().filter(|r| r.affected).filter_map(|r| r.id).collect();
        let kept: BTreeSet<RowId> = after.rows.iter().filter_map(|r| r.id).collect();
        written.extend(before.keys().filter(|id| !kept.contains(id)));
        for row in written {
            for t in &concurrent {
                if t.write_set.contains(&(table.to_string(), row)) {
                    would_abort = Some(WouldAbort {
                        stmt_index: s.index,
                        conflicting_xid: t.xid,
                        table: table.to_string(),
                        row_id: row,
                    });
                    break 'outer;
                }
            }
        }
    }
    Ok(WhatIfResult {
        debug_view: scenario.debug_view(&DebugOptions {
            show_unaffected: sc.show_unaffected,
            tables: None,
        })?,
        divergence,
        would_abort,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provenance::debug_view;

    fn fig1() -> Engine {
        let mut e = Engine::default();
        e.run_workload_text(include_str!("../../../workloads/fig1.workload")).unwrap();
        e
    }

    #[test]
    fn identity_scenario_reproduces_the_view() {
        let e = fig1();
        for xid in [TxnId(1), TxnId(2)] {
            let sc = WhatIfScenario {
                xid,
                ..Default::default()
            };
            let r = run_whatif(&e, &sc).unwrap();
            assert!(r.divergence.is_empty());
            assert!(r.would_abort.is_none());
            assert_eq!(r.debug_view, debug_view(&e, xid, &DebugOptions::default()).unwrap());
            let keep_all = WhatIfScenario {
                xid,
                statement_edits: vec![StatementEdit::Keep { index: 1 }, StatementEdit::Keep { index: 0 }],
                ..Default::default()
            };
            assert_eq!(run_whatif(&e, &keep_all).unwrap(), r);
        }
    }

    #[test]
    fn promotion_would_abort_on_the_checking_row() {
        let e = fig1();
        let sc: WhatIfScenario = serde_json::from_str(include_str!("../../../workloads/promotion.json")).unwrap();
        let r = run_whatif(&e, &sc).unwrap();
        assert_eq!(
            r.would_abort,
            Some(WouldAbort {
                stmt_index: 0,
                conflicting_xid: TxnId(1),
                table: "account".into(),
                row_id: RowId(1),
            })
        );
        assert_eq!(r.debug_view.columns.len(), 4);
    }

    #[test]
    fn data_edit_raises_the_initial_checking_balance() {
        let e = fig1();
        let sc = WhatIfScenario {
            xid: TxnId(1),
            data_edits: vec![DataEdit {
                table: "account".into(),
                rows: vec![
                    EditRow {
                        row_id: Some(RowId(1)),
                        values: vec!["Alice".into(), "Checking".into(), Value::Int(200)],
                    },
                    EditRow {
                        row_id: Some(RowId(2)),
                        values: vec!["Alice".into(), "Savings".into(), Value::Int(30)],
                    },
                ],
            }],
            show_unaffected: true,
            ..Default::default()
        };
        let r = run_whatif(&e, &sc).unwrap();
        let last = r.debug_view.columns.last().unwrap();
        assert_eq!(last.tables["account"].rows[0].values[2], Value::dec(130));
        assert!(last.tables["overdraft"].rows.is_empty());
        let d = &r.divergence.tables["account"];
        assert_eq!(d.changed.len(), 1);
        assert_eq!(d.changed[0].changes[0].new, Value::dec(130));
    }

    #[test]
    fn replaced_amount_creates_overdraft_rows() {
        let e = fig1();
        let sc = WhatIfScenario {
            xid: TxnId(2),
            statement_edits: vec![StatementEdit::Replace {
                index: 0,
                sql: "UPDATE account SET bal = bal - :amount WHERE cust = :name AND typ = :type".into(),
                binds: [
                    (":amount".to_string(), Value::Int(100)),
                    (":name".to_string(), "Alice".into()),
                    (":type".to_string(), "Savings".into()),
                ]
                .into(),
            }],
            ..Default::default()
        };
        let r = run_whatif(&e, &sc).unwrap();
        let d = &r.divergence.tables;
        assert_eq!(d["account"].changed[0].changes[0].new, Value::dec(-70));
        let od: Vec<_> = d["overdraft"].only_in_scenario.iter().map(|r| r.values[1].clone()).collect();
        assert_eq!(od, vec![Value::dec(-20), Value::dec(-20)]);
    }

    #[test]
    fn scenario_errors_name_the_statement() {
        let e = fig1();
        let h = e.content_hash();
        let bad = WhatIfScenario {
            xid: TxnId(2),
            statement_edits: vec![StatementEdit::InsertAt {
                index: 1,
                sql: "UPDATE account SET nope = 1".into(),
                binds: BindParams::new(),
            }],
            ..Default::default()
        };
        match run_whatif(&e, &bad) {
            Err(Error::Scenario { index: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        let twice = WhatIfScenario {
            xid: TxnId(2),
            statement_edits: vec![StatementEdit::Delete { index: 0 }, StatementEdit::Keep { index: 0 }],
            ..Default::default()
        };
        assert!(matches!(run_whatif(&e, &twice), Err(Error::InvalidScenario(_))));
        assert_eq!(e.content_hash(), h);
    }
}
