//! The transaction engine: sessions, statement execution and the audit log.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, NaiveDate, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::algebra::VersionRef;
use crate::audit::{AuditLog, AuditLogEntry, EntryKind};
use crate::error::{Error, Result};
use crate::exec::{run_query, NRow};
use crate::expr::RowCtx;
use crate::par::ExecMode;
use crate::sql::analyze::{analyze, BoundInsertSource, BoundQuery, BoundStatement, Catalog};
use crate::sql::bind::{bind, parameters, param_key, BindParams};
use crate::sql::parser::{parse, Command};
use crate::sql::workload::{parse_workload, WorkloadScript};
use crate::sql::ast::Statement;
use crate::storage::{PendingWrite, RowId, Schema, Scn, Storage, TxnId};
use crate::txn::{IsolationLevel, StatementResult, TxnRecord, TxnState};
use crate::value::{cmp_rows, Value};

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub mode: ExecMode,
    /// Keep every statement's before/after read views (for verification).
    pub record_states: bool,
    /// Wall clock of SCN 0; SCN `n` is stamped `clock_base + n` seconds.
    pub clock_base: DateTime<Utc>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            mode: ExecMode::default(),
            record_states: false,
            clock_base: Utc.with_ymd_and_hms(2016, 3, 1, 0, 0, 0).unwrap(),
        }
    }
}

/// A row of a recorded read view.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StateRow {
    pub id: RowId,
    pub values: Vec<Value>,
    pub version: VersionRef,
}

/// Read views of every table around one statement.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RecordedState {
    pub before: BTreeMap<String, Vec<StateRow>>,
    pub after: BTreeMap<String, Vec<StateRow>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct QueryOutput {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ExecOutcome {
    pub stmt_index: u32,
    pub stmt_scn: Scn,
    pub result: StatementResult,
    /// Rows of a SELECT.
    pub output: Option<QueryOutput>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TxnOutcome {
    pub xid: TxnId,
    pub session: String,
    pub state: TxnState,
    pub statements: u32,
    /// Message of the write conflict that aborted the transaction.
    pub conflict: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RunSummary {
    pub transactions: Vec<TxnOutcome>,
    pub tables_created: Vec<String>,
    /// (workload line, result) of each SELECT.
    pub selects: Vec<(usize, QueryOutput)>,
}

const STATE_FORMAT: &str = "reenact-state";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateImage {
    format: String,
    version: u32,
    storage: Storage,
    log: String,
}

#[derive(Debug, Clone)]
pub struct Engine {
    storage: Storage,
    log: AuditLog,
    txns: BTreeMap<TxnId, TxnRecord>,
    sessions: BTreeMap<String, TxnId>,
    session_binds: BTreeMap<String, BindParams>,
    next_xid: u64,
    config: EngineConfig,
    recorded: BTreeMap<(TxnId, u32), RecordedState>,
}

impl Default for Engine {
    fn default() -> Self {
        Engine::new(EngineConfig::default())
    }
}

impl Engine {
    pub fn new(config: EngineConfig) -> Engine {
        Engine {
            storage: Storage::new(),
            log: AuditLog::new(),
            txns: BTreeMap::new(),
            sessions: BTreeMap::new(),
            session_binds: BTreeMap::new(),
            next_xid: 1,
            config,
            recorded: BTreeMap::new(),
        }
    }

    /// Rebuilds an engine from a storage image and the audit log that
    /// produced it. Transactions still active in the log stay active but
    /// hold no pending writes.
    pub fn from_parts(storage: Storage, log: AuditLog, config: EngineConfig) -> Result<Engine> {
        let mut e = Engine::new(config);
        e.storage = storage;
        e.install_log(log)?;
        Ok(e)
    }

    /// Replaces the audit log with an imported one. Fails without changes
    /// when a transaction is in flight or the log is ahead of the storage.
    pub fn import_log(&mut self, text: &str) -> Result<()> {
        let log = AuditLog::import_jsonl(text)?;
        if let Some(x) = self.txns.values().find(|t| t.state == TxnState::Active) {
            return Err(Error::Unsupported(format!(
                "cannot import an audit log while transaction {} is active",
                x.xid
            )));
        }
        self.install_log(log)
    }

    pub fn export_log(&self) -> String {
        self.log.export_jsonl()
    }

    /// Serializes storage and audit log, enough to resume later with
    /// [`Engine::import_state`]. Refused while a transaction is active.
    pub fn export_state(&self) -> Result<String> {
        if let Some(x) = self.txns.values().find(|t| t.state == TxnState::Active) {
            return Err(Error::Unsupported(format!("cannot save state while transaction {} is active", x.xid)));
        }
        let image = StateImage {
            format: STATE_FORMAT.into(),
            version: 1,
            storage: self.storage.clone(),
            log: self.log.export_jsonl(),
        };
        Ok(serde_json::to_string(&image).expect("state serializes"))
    }

    pub fn import_state(text: &str, config: EngineConfig) -> Result<Engine> {
        let image: StateImage = serde_json::from_str(text).map_err(|e| Error::MalformedState(e.to_string()))?;
        if image.format != STATE_FORMAT || image.version != 1 {
            return Err(Error::MalformedState(format!(
                "unsupported format {} v{}",
                image.format, image.version
            )));
        }
        Engine::from_parts(image.storage, AuditLog::import_jsonl(&image.log)?, config)
    }

    fn install_log(&mut self, log: AuditLog) -> Result<()> {
        if let Some(last) = log.entries().last() {
            if last.stmt_scn > self.storage.current_scn() {
                return Err(Error::FutureScn {
                    requested: last.stmt_scn,
                    current: self.storage.current_scn(),
                });
            }
        }
        let mut txns = BTreeMap::new();
        for s in log.list_transactions(None)? {
            let write_set = match s.state {
                TxnState::Committed => self.storage.committed_writes(s.xid).into_iter().collect(),
                _ => BTreeSet::new(),
            };
            txns.insert(
                s.xid,
                TxnRecord {
                    xid: s.xid,
                    session: s.session.clone(),
                    isolation: s.isolation,
                    begin_scn: s.begin_scn,
                    commit_scn: s.commit_scn,
                    end_scn: s.abort_scn,
                    state: s.state,
                    write_set,
                    statements: s.statements.len() as u32,
                },
            );
        }
        self.next_xid = txns.keys().last().map_or(1, |x| x.0 + 1);
        self.txns = txns;
        self.sessions.clear();
        self.recorded.clear();
        self.log = log;
        Ok(())
    }

    pub fn storage(&self) -> &Storage {
        &self.storage
    }

    pub fn log(&self) -> &AuditLog {
        &self.log
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn set_mode(&mut self, mode: ExecMode) {
        self.config.mode = mode;
    }

    pub fn txn(&self, xid: TxnId) -> Result<&TxnRecord> {
        self.txns.get(&xid).ok_or(Error::UnknownTxn(xid))
    }

    pub fn transactions(&self) -> impl Iterator<Item = &TxnRecord> {
        self.txns.values()
    }

    /// Active transaction of a session.
    pub fn session_txn(&self, session: &str) -> Option<TxnId> {
        self.sessions.get(session).copied()
    }

    /// Recorded read views around statement `stmt` of `xid`.
    pub fn recorded(&self, xid: TxnId, stmt: u32) -> Option<&RecordedState> {
        self.recorded.get(&(xid, stmt))
    }

    pub fn wall_clock(&self, scn: Scn) -> DateTime<Utc> {
        self.config.clock_base + chrono::Duration::seconds(scn.0 as i64)
    }

    /// SHA-256 over the serialized storage and audit log.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(&(&self.storage, &self.log)).expect("engine state serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn create_table(&mut self, schema: Schema, rows: Vec<Vec<Value>>) -> Result<()> {
        self.storage.create_table(schema, rows)
    }

    pub fn begin(&mut self, session: &str, isolation: IsolationLevel) -> Result<TxnId> {
        if self.sessions.contains_key(session) {
            return Err(Error::NestedBegin(session.to_string()));
        }
        let xid = TxnId(self.next_xid);
        self.next_xid += 1;
        let scn = self.storage.advance_scn();
        self.txns.insert(
            xid,
            TxnRecord {
                xid,
                session: session.to_string(),
                isolation,
                begin_scn: scn,
                commit_scn: None,
                end_scn: None,
                state: TxnState::Active,
                write_set: BTreeSet::new(),
                statements: 0,
            },
        );
        self.sessions.insert(session.to_string(), xid);
        self.append(xid, None, EntryKind::Begin, String::new(), BindParams::new(), scn, Vec::new());
        Ok(xid)
    }

    /// Executes one statement in `xid`. Any failure aborts the transaction.
    pub fn execute(&mut self, xid: TxnId, sql: &str, binds: &BindParams) -> Result<ExecOutcome> {
        self.active(xid)?;
        let res = parse(sql).and_then(|stmt| self.run_statement(xid, &stmt, sql, binds));
        if res.is_err() {
            self.abort(xid)?;
        }
        res
    }

    pub fn commit(&mut self, xid: TxnId) -> Result<Scn> {
        let rec = self.active(xid)?;
        let rows: Vec<_> = rec.write_set.iter().cloned().collect();
        let scn = self.storage.advance_scn();
        self.storage.commit_writes(xid, scn, &rows)?;
        self.finish(xid, scn, TxnState::Committed);
        Ok(scn)
    }

    pub fn abort(&mut self, xid: TxnId) -> Result<Scn> {
        let rec = self.active(xid)?;
        let rows: Vec<_> = rec.write_set.iter().cloned().collect();
        self.storage.discard_writes(xid, &rows);
        let scn = self.storage.advance_scn();
        self.finish(xid, scn, TxnState::Aborted);
        Ok(scn)
    }

    fn finish(&mut self, xid: TxnId, scn: Scn, state: TxnState) {
        let rec = self.txns.get_mut(&xid).expect("active txn");
        rec.state = state;
        if state == TxnState::Committed {
            rec.commit_scn = Some(scn);
        } else {
            rec.end_scn = Some(scn);
        }
        let session = rec.session.clone();
        self.sessions.remove(&session);
        let kind = if state == TxnState::Committed {
            EntryKind::Commit
        } else {
            EntryKind::Abort
        };
        self.append(xid, None, kind, String::new(), BindParams::new(), scn, Vec::new());
    }

    fn active(&self, xid: TxnId) -> Result<&TxnRecord> {
        let rec = self.txn(xid)?;
        match rec.state {
            TxnState::Active => Ok(rec),
            TxnState::Aborted => Err(Error::AbortedTxn(xid)),
            TxnState::Committed => Err(Error::TxnNotActive(xid)),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn append(
        &mut self,
        xid: TxnId,
        stmt_index: Option<u32>,
        kind: EntryKind,
        sql_text: String,
        binds: BindParams,
        scn: Scn,
        inserted_row_ids: Vec<RowId>,
    ) {
        let rec = &self.txns[&xid];
        let entry = AuditLogEntry {
            xid,
            stmt_index,
            kind,
            sql_text,
            binds,
            stmt_scn: scn,
            wall_clock: Some(self.wall_clock(scn)),
            session: rec.session.clone(),
            isolation: rec.isolation,
            inserted_row_ids,
        };
        self.log.append(entry);
    }

    /// Read-only query over the latest committed state.
    pub fn query(&self, sql: &str, binds: &BindParams) -> Result<QueryOutput> {
        let stmt = bind(&parse(sql)?, binds)?;
        match analyze(&stmt, self)? {
            BoundStatement::Select(q) => {
                let at = self.storage.current_scn();
                let rows = run_query(&q, &mut |_, t, as_of| self.committed_rows(t, as_of.unwrap_or(at)))?;
                Ok(output(&q, rows))
            }
            BoundStatement::ProvenanceOfQuery(_) | BoundStatement::ProvenanceOfTransaction(_) => {
                crate::provenance::provenance_request(self, sql, binds)
            }
            _ => Err(Error::Unsupported("only queries can run outside a transaction".into())),
        }
    }

    fn committed_rows(&self, table: &str, as_of: Scn) -> Result<Vec<NRow>> {
        Ok(self
            .storage
            .scan_asof(table, as_of)?
            .into_iter()
            .map(|v| NRow {
                id: Some(v.row),
                values: v.values.clone(),
                prov: vec![Some(VersionRef::committed(table, v.row, v.begin))],
            })
            .collect())
    }

    /// Rows of `xid`'s read view of `table` at `read_scn`.
    pub fn view_rows(&self, table: &str, read_scn: Scn, xid: TxnId) -> Result<Vec<StateRow>> {
        Ok(self
            .storage
            .read_view(table, read_scn, xid)?
            .into_iter()
            .map(|r| StateRow {
                version: match r.begin {
                    Some(begin) => VersionRef::committed(table, r.row, begin),
                    None => VersionRef::Intra {
                        xid,
                        stmt: r.creator_stmt.unwrap_or(0),
                        table: table.into(),
                        row: r.row,
                    },
                },
                id: r.row,
                values: r.values,
            })
            .collect())
    }

    fn all_views(&self, read_scn: Scn, xid: TxnId) -> Result<BTreeMap<String, Vec<StateRow>>> {
        self.storage
            .table_names()
            .into_iter()
            .map(|t| Ok((t.clone(), self.view_rows(&t, read_scn, xid)?)))
            .collect()
    }

    fn run_statement(&mut self, xid: TxnId, stmt: &Statement, text: &str, binds: &BindParams) -> Result<ExecOutcome> {
        let binds: BindParams = binds.iter().map(|(k, v)| (param_key(k), v.clone())).collect();
        let bound = analyze(&bind(stmt, &binds)?, self)?;
        let used: BindParams = parameters(stmt)
            .into_iter()
            .filter_map(|p| binds.get(&p).map(|v| (p, v.clone())))
            .collect();
        let rec = self.active(xid)?.clone();
        let stmt_index = rec.statements;
        let scn = self.storage.advance_scn();
        let read_scn = rec.read_scn(scn);
        let si = match rec.isolation {
            IsolationLevel::Snapshot => Some(rec.begin_scn),
            IsolationLevel::ReadCommitted => None,
        };
        let before = if self.config.record_states {
            Some(self.all_views(read_scn, xid)?)
        } else {
            None
        };
        let mut result = StatementResult {
            recorded_input_scn: read_scn,
            ..Default::default()
        };
        let mut output_rows = None;
        // Rows to write: `None` id for inserts, `None` values for deletes.
        let writes: Vec<(Option<RowId>, Option<Vec<Value>>)> = {
            let this = &*self;
            let mut source = |_: usize, t: &str, as_of: Option<Scn>| -> Result<Vec<NRow>> {
                match as_of {
                    Some(a) => this.committed_rows(t, a),
                    None => Ok(this
                        .view_rows(t, read_scn, xid)?
                        .into_iter()
                        .map(|r| NRow {
                            id: Some(r.id),
                            values: r.values,
                            prov: vec![Some(r.version)],
                        })
                        .collect()),
                }
            };
            match &bound {
                BoundStatement::Select(q) => {
                    let rows = run_query(q, &mut source)?;
                    output_rows = Some(output(q, rows));
                    Vec::new()
                }
                BoundStatement::Update(u) => {
                    let schema = this.storage.schema(&u.table)?;
                    let mut w = Vec::new();
                    for r in this.storage.read_view(&u.table, read_scn, xid)? {
                        let ctx = RowCtx::single(&r.values, Some(r.row));
                        if let Some(f) = &u.filter {
                            if !f.eval_bool(&ctx)? {
                                continue;
                            }
                        }
                        let mut new = r.values.clone();
                        for (i, e) in &u.sets {
                            new[*i] = e.eval(&ctx)?;
                        }
                        w.push((Some(r.row), Some(schema.conform(new)?)));
                    }
                    w
                }
                BoundStatement::Delete(d) => {
                    let mut w = Vec::new();
                    for r in this.storage.read_view(&d.table, read_scn, xid)? {
                        if let Some(f) = &d.filter {
                            if !f.eval_bool(&RowCtx::single(&r.values, Some(r.row)))? {
                                continue;
                            }
                        }
                        w.push((Some(r.row), None));
                    }
                    w
                }
                BoundStatement::Insert(ins) => {
                    let schema = this.storage.schema(&ins.table)?;
                    let mut rows: Vec<(Vec<Value>, Vec<Option<VersionRef>>)> = match &ins.source {
                        BoundInsertSource::Values(rows) => rows
                            .iter()
                            .map(|r| {
                                let ctx = RowCtx::single(&[], None);
                                let v = r.iter().map(|e| e.eval(&ctx)).collect::<Result<Vec<_>>>()?;
                                Ok((schema.conform(v)?, Vec::new()))
                            })
                            .collect::<Result<_>>()?,
                        BoundInsertSource::Query(q, casts) => run_query(q, &mut source)?
                            .into_iter()
                            .map(|r| {
                                let v = r
                                    .values
                                    .into_iter()
                                    .zip(casts)
                                    .map(|(v, k)| match k {
                                        Some(k) => v.coerce(*k),
                                        None => Ok(v),
                                    })
                                    .collect::<Result<Vec<_>>>()?;
                                Ok((schema.conform(v)?, r.prov))
                            })
                            .collect::<Result<_>>()?,
                    };
                    rows.sort_by(|a, b| cmp_rows(&a.0, &b.0).then_with(|| a.1.cmp(&b.1)));
                    rows.into_iter().map(|(v, _)| (None, Some(v))).collect()
                }
                BoundStatement::ProvenanceOfTransaction(_) | BoundStatement::ProvenanceOfQuery(_) => {
                    return Err(Error::Unsupported("PROVENANCE cannot run inside a transaction".into()))
                }
            }
        };
        // Staged rows join the write set even on failure so that the abort
        // discards them.
        let mut staged: Vec<(String, RowId)> = Vec::new();
        let outcome = (|| -> Result<()> {
            let Some(table) = bound.target_table() else { return Ok(()) };
            for (row, values) in writes {
                let row = match row {
                    Some(r) => {
                        result.affected_row_ids.insert(r);
                        r
                    }
                    None => {
                        let r = self.storage.allocate_row_id(table)?;
                        result.inserted_row_ids.insert(r);
                        r
                    }
                };
                let write = PendingWrite {
                    xid,
                    stmt: stmt_index,
                    values,
                    scn,
                };
                staged.push((table.to_string(), row));
                self.storage.stage_write(table, row, write, si)?;
            }
            Ok(())
        })();
        let rec = self.txns.get_mut(&xid).expect("active txn");
        rec.write_set.extend(staged);
        outcome?;
        rec.statements += 1;
        let inserted: Vec<RowId> = result.inserted_row_ids.iter().copied().collect();
        self.append(xid, Some(stmt_index), EntryKind::Dml, text.trim().to_string(), used, scn, inserted);
        if let Some(before) = before {
            let after = self.all_views(read_scn, xid)?;
            self.recorded.insert((xid, stmt_index), RecordedState { before, after });
        }
        Ok(ExecOutcome {
            stmt_index,
            stmt_scn: scn,
            result,
            output: output_rows,
        })
    }

    pub fn run_workload_text(&mut self, text: &str) -> Result<RunSummary> {
        let script = parse_workload(text)?;
        self.run_workload(&script)
    }

    /// Runs a parsed workload. A write conflict aborts the offending
    /// transaction and the session's remaining statements up to its
    /// COMMIT/ABORT are skipped; any other failure stops the run.
    pub fn run_workload(&mut self, script: &WorkloadScript) -> Result<RunSummary> {
        let mut summary = RunSummary::default();
        let mut skipping: BTreeSet<String> = BTreeSet::new();
        let mut conflicts: BTreeMap<TxnId, String> = BTreeMap::new();
        let mut started: Vec<TxnId> = Vec::new();
        for l in &script.lines {
            let at = |e: Error| e.at_line(l.line);
            match &l.command {
                Command::CreateTable { name, columns, rows } => {
                    let schema = Schema {
                        table: name.clone(),
                        columns: columns.clone(),
                    };
                    let values = rows
                        .iter()
                        .map(|r| self.constant_row(r))
                        .collect::<Result<Vec<_>>>()
                        .map_err(at)?;
                    self.storage.create_table(schema, values).map_err(at)?;
                    summary.tables_created.push(name.clone());
                }
                Command::Bind(binds) => {
                    let s = self.session_binds.entry(l.session.clone()).or_default();
                    for (k, v) in binds {
                        s.insert(param_key(k), v.clone());
                    }
                }
                Command::Begin(iso) => {
                    let xid = self.begin(&l.session, *iso).map_err(at)?;
                    started.push(xid);
                }
                Command::Commit | Command::Abort => {
                    if skipping.remove(&l.session) {
                        continue;
                    }
                    let xid = self
                        .session_txn(&l.session)
                        .ok_or_else(|| at(Error::NoActiveTxn(l.session.clone())))?;
                    if matches!(l.command, Command::Commit) {
                        self.commit(xid).map_err(at)?;
                    } else {
                        self.abort(xid).map_err(at)?;
                    }
                }
                Command::Statement(stmt) => {
                    if skipping.contains(&l.session) {
                        continue;
                    }
                    let xid = self
                        .session_txn(&l.session)
                        .ok_or_else(|| at(Error::NoActiveTxn(l.session.clone())))?;
                    let binds = self.session_binds.get(&l.session).cloned().unwrap_or_default();
                    self.active(xid).map_err(at)?;
                    match self.run_statement(xid, stmt, &l.text, &binds) {
                        Ok(o) => {
                            if let Some(out) = o.output {
                                summary.selects.push((l.line, out));
                            }
                        }
                        Err(e) => {
                            self.abort(xid).map_err(at)?;
                            if matches!(e, Error::WriteConflict { .. }) {
                                conflicts.insert(xid, e.to_string());
                                skipping.insert(l.session.clone());
                            } else {
                                return Err(at(e));
                            }
                        }
                    }
                }
            }
        }
        for xid in started {
            let t = &self.txns[&xid];
            summary.transactions.push(TxnOutcome {
                xid,
                session: t.session.clone(),
                state: t.state,
                statements: t.statements,
                conflict: conflicts.remove(&xid),
            });
        }
        Ok(summary)
    }
}

impl Engine {
    /// Evaluates a row of constant expressions (bootstrap data).
    fn constant_row(&self, exprs: &[crate::sql::ast::Expr]) -> Result<Vec<Value>> {
        use crate::sql::ast::{Query, SelectCore, SelectItem};
        let q = Query::single(SelectCore {
            items: exprs
                .iter()
                .map(|e| SelectItem::Expr {
                    expr: e.clone(),
                    alias: None,
                })
                .collect(),
            from: None,
            filter: None,
        });
        let q = crate::sql::analyze::analyze_query(&q, self)?;
        let rows = run_query(&q, &mut |_, _, _| Ok(Vec::new()))?;
        Ok(rows.into_iter().next().map(|r| r.values).unwrap_or_default())
    }
}

fn output(q: &BoundQuery, rows: Vec<NRow>) -> QueryOutput {
    QueryOutput {
        columns: q.columns.iter().map(|c| c.name.clone()).collect(),
        rows: rows.into_iter().map(|r| r.values).collect(),
    }
}

/// Parses `YYYY-MM-DD`, `YYYY-MM-DD HH:MM:SS` or RFC 3339 timestamps (UTC).
pub fn parse_timestamp(ts: &str) -> Result<DateTime<Utc>> {
    let ts = ts.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(ts) {
        return Ok(t.with_timezone(&Utc));
    }
    for f in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(ts, f) {
            return Ok(t.and_utc());
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(ts, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).expect("midnight").and_utc());
    }
    Err(Error::TypeMismatch(format!("invalid timestamp '{ts}'")))
}

impl Catalog for Engine {
    fn table_schema(&self, name: &str) -> Result<Schema> {
        self.storage.schema(name).cloned()
    }

    fn resolve_timestamp(&self, ts: &str) -> Result<Scn> {
        let t = parse_timestamp(ts)?;
        Ok(self.log.resolve_timestamp(t).unwrap_or(Scn(0)))
    }
}
