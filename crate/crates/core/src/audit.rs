//! Audit log: every executed statement and lifecycle event, in SCN order.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sql::BindParams;
use crate::storage::{RowId, Scn, TxnId};
use crate::txn::{IsolationLevel, TxnState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EntryKind {
    Begin,
    Dml,
    Commit,
    Abort,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AuditLogEntry {
    pub xid: TxnId,
    /// 0-based statement index; absent on lifecycle entries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stmt_index: Option<u32>,
    pub kind: EntryKind,
    #[serde(default)]
    pub sql_text: String,
    #[serde(default)]
    pub binds: BindParams,
    pub stmt_scn: Scn,
    pub wall_clock: Option<DateTime<Utc>>,
    pub session: String,
    pub isolation: IsolationLevel,
    /// Row ids assigned to rows inserted by this statement, ascending.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inserted_row_ids: Vec<RowId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StatementInterval {
    pub stmt_index: u32,
    pub start_scn: Scn,
    /// Start of the next statement, or the commit/abort SCN; `None` while
    /// the last statement of an active transaction is open.
    pub end_scn: Option<Scn>,
    pub sql_text: String,
    pub binds: BindParams,
    pub wall_clock: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TransactionSummary {
    pub xid: TxnId,
    pub session: String,
    pub isolation: IsolationLevel,
    pub begin_scn: Scn,
    pub commit_scn: Option<Scn>,
    pub abort_scn: Option<Scn>,
    pub state: TxnState,
    pub begin_wall_clock: Option<DateTime<Utc>>,
    pub end_wall_clock: Option<DateTime<Utc>>,
    pub statements: Vec<StatementInterval>,
}

impl TransactionSummary {
    pub fn end_scn(&self) -> Option<Scn> {
        self.commit_scn.or(self.abort_scn)
    }
}

const FORMAT: &str = "reenact-audit-log";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    entries: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AuditLog {
    entries: Vec<AuditLogEntry>,
}

impl AuditLog {
    pub fn new() -> AuditLog {
        AuditLog::default()
    }

    /// Builds a log from entries, checking its structural invariants.
    pub fn from_entries(entries: Vec<AuditLogEntry>) -> Result<AuditLog> {
        validate(&entries)?;
        Ok(AuditLog { entries })
    }

    pub fn entries(&self) -> &[AuditLogEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub(crate) fn append(&mut self, e: AuditLogEntry) {
        self.entries.push(e);
    }

    /// All entries of one transaction, in order.
    pub fn entries_of(&self, xid: TxnId) -> Vec<&AuditLogEntry> {
        self.entries.iter().filter(|e| e.xid == xid).collect()
    }

    /// DML entries of one transaction, in statement order.
    pub fn statements_of(&self, xid: TxnId) -> Vec<&AuditLogEntry> {
        self.entries
            .iter()
            .filter(|e| e.xid == xid && e.kind == EntryKind::Dml)
            .collect()
    }

    pub fn get_transaction(&self, xid: TxnId) -> Result<TransactionSummary> {
        self.summaries()
            .into_iter()
            .find(|s| s.xid == xid)
            .ok_or(Error::UnknownTxn(xid))
    }

    /// Transactions whose lifetime overlaps `[from, to]`, by begin SCN.
    /// Active transactions extend to infinity.
    pub fn list_transactions(&self, range: Option<(Scn, Scn)>) -> Result<Vec<TransactionSummary>> {
        if let Some((from, to)) = range {
            if from > to {
                return Err(Error::InvalidRange { from, to });
            }
        }
        let mut out: Vec<TransactionSummary> = self
            .summaries()
            .into_iter()
            .filter(|s| match range {
                None => true,
                Some((from, to)) => s.begin_scn <= to && s.end_scn().is_none_or(|e| e >= from),
            })
            .collect();
        out.sort_by_key(|s| (s.begin_scn, s.xid));
        Ok(out)
    }

    fn summaries(&self) -> Vec<TransactionSummary> {
        let mut by_xid: BTreeMap<TxnId, TransactionSummary> = BTreeMap::new();
        for e in &self.entries {
            match e.kind {
                EntryKind::Begin => {
                    by_xid.insert(
                        e.xid,
                        TransactionSummary {
                            xid: e.xid,
                            session: e.session.clone(),
                            isolation: e.isolation,
                            begin_scn: e.stmt_scn,
                            commit_scn: None,
                            abort_scn: None,
                            state: TxnState::Active,
                            begin_wall_clock: e.wall_clock,
                            end_wall_clock: None,
                            statements: Vec::new(),
                        },
                    );
                }
                EntryKind::Dml => {
                    if let Some(s) = by_xid.get_mut(&e.xid) {
                        if let Some(prev) = s.statements.last_mut() {
                            prev.end_scn = Some(e.stmt_scn);
                        }
                        s.statements.push(StatementInterval {
                            stmt_index: e.stmt_index.unwrap_or(s.statements.len() as u32),
                            start_scn: e.stmt_scn,
                            end_scn: None,
                            sql_text: e.sql_text.clone(),
                            binds: e.binds.clone(),
                            wall_clock: e.wall_clock,
                        });
                    }
                }
                EntryKind::Commit | EntryKind::Abort => {
                    if let Some(s) = by_xid.get_mut(&e.xid) {
                        if let Some(prev) = s.statements.last_mut() {
                            prev.end_scn = Some(e.stmt_scn);
                        }
                        s.end_wall_clock = e.wall_clock;
                        if e.kind == EntryKind::Commit {
                            s.commit_scn = Some(e.stmt_scn);
                            s.state = TxnState::Committed;
                        } else {
                            s.abort_scn = Some(e.stmt_scn);
                            s.state = TxnState::Aborted;
                        }
                    }
                }
            }
        }
        by_xid.into_values().collect()
    }

    /// Largest SCN whose wall clock is at or before `ts`.
    pub fn resolve_timestamp(&self, ts: DateTime<Utc>) -> Option<Scn> {
        self.entries
            .iter()
            .filter(|e| e.wall_clock.is_some_and(|w| w <= ts))
            .map(|e| e.stmt_scn)
            .max()
    }

    /// JSON-lines rendering: a header line, then one entry per line.
    pub fn export_jsonl(&self) -> String {
        let header = Header {
            format: FORMAT.into(),
            version: VERSION,
            entries: self.entries.len(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("entries serialize"));
            out.push('\n');
        }
        out
    }

    /// Parses an exported log. Any defect rejects the whole file.
    pub fn import_jsonl(text: &str) -> Result<AuditLog> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or(Error::MalformedLog {
            line: 1,
            message: "missing header".into(),
        })?;
        let header: Header = serde_json::from_str(first).map_err(|e| Error::MalformedLog {
            line: 1,
            message: format!("bad header: {e}"),
        })?;
        if header.format != FORMAT || header.version != VERSION {
            return Err(Error::MalformedLog {
                line: 1,
                message: format!("unsupported format {} v{}", header.format, header.version),
            });
        }
        let mut entries = Vec::with_capacity(header.entries);
        for (n, l) in lines {
            let e: AuditLogEntry = serde_json::from_str(l).map_err(|e| Error::MalformedLog {
                line: n + 1,
                message: e.to_string(),
            })?;
            entries.push(e);
        }
        if entries.len() != header.entries {
            return Err(Error::MalformedLog {
                line: text.lines().count(),
                message: format!("expected {} entries, found {}", header.entries, entries.len()),
            });
        }
        AuditLog::from_entries(entries)
    }
}

fn validate(entries: &[AuditLogEntry]) -> Result<()> {
    let bad = |i: usize, message: String| Error::MalformedLog { line: i + 2, message };
    // Per transaction: (next statement index, last scn, finished).
    let mut txns: BTreeMap<TxnId, (u32, Scn, bool)> = BTreeMap::new();
    let mut last_scn: Option<Scn> = None;
    for (i, e) in entries.iter().enumerate() {
        if last_scn.is_some_and(|s| e.stmt_scn <= s) {
            return Err(bad(i, format!("scn {} is not increasing", e.stmt_scn)));
        }
        last_scn = Some(e.stmt_scn);
        match e.kind {
            EntryKind::Begin => {
                if txns.insert(e.xid, (0, e.stmt_scn, false)).is_some() {
                    return Err(bad(i, format!("transaction {} begins twice", e.xid)));
                }
            }
            kind => {
                let Some(t) = txns.get_mut(&e.xid) else {
                    return Err(bad(i, format!("transaction {} has no BEGIN", e.xid)));
                };
                if t.2 {
                    return Err(bad(i, format!("transaction {} already ended", e.xid)));
                }
                if kind == EntryKind::Dml {
                    if e.stmt_index != Some(t.0) {
                        return Err(bad(i, format!("transaction {} expects statement index {}", e.xid, t.0)));
                    }
                    t.0 += 1;
                } else {
                    t.2 = true;
                }
                t.1 = e.stmt_scn;
            }
        }
    }
    Ok(())
}
