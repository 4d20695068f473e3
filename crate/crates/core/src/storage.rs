//! Versioned in-memory tables.
//!
//! Every logical row keeps its full version chain. Committed versions carry a
//! validity interval `[begin, end)` in SCNs; an in-flight transaction's write
//! to a row is held as a single pending version next to the chain until the
//! transaction commits (the pending version becomes the new head, begin set
//! to the commit SCN) or aborts (it is dropped).

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::value::{Value, ValueKind};

macro_rules! id_newtype {
    ($(#[$m:meta])* $name:ident, $prefix:literal) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_newtype!(
    /// System change number: the engine's logical clock.
    Scn, ""
);
id_newtype!(
    /// Identity of a logical row, stable across its versions.
    RowId, ""
);
id_newtype!(TxnId, "");

/// Creator of initially loaded rows.
pub const LOADER_TXN: TxnId = TxnId(0);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    pub kind: ValueKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub table: String,
    pub columns: Vec<ColumnDef>,
}

impl Schema {
    pub fn new(table: impl Into<String>, columns: &[(&str, ValueKind)]) -> Schema {
        Schema {
            table: table.into(),
            columns: columns
                .iter()
                .map(|(n, k)| ColumnDef {
                    name: n.to_string(),
                    kind: *k,
                })
                .collect(),
        }
    }

    pub fn arity(&self) -> usize {
        self.columns.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Checks arity and converts each value to its column kind.
    pub fn conform(&self, values: Vec<Value>) -> Result<Vec<Value>> {
        if values.len() != self.arity() {
            return Err(Error::ArityMismatch {
                table: self.table.clone(),
                expected: self.arity(),
                found: values.len(),
            });
        }
        values
            .into_iter()
            .zip(&self.columns)
            .map(|(v, c)| {
                if let Some(k) = v.kind() {
                    if (k == ValueKind::Text) != (c.kind == ValueKind::Text) {
                        return Err(Error::TypeMismatch(format!(
                            "value {} does not fit column {}.{} of type {}",
                            v.to_sql(),
                            self.table,
                            c.name,
                            c.kind
                        )));
                    }
                }
                v.coerce(c.kind)
            })
            .collect()
    }
}

/// One immutable version of a row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TupleVersion {
    pub row: RowId,
    pub values: Vec<Value>,
    pub begin: Scn,
    /// `None` while the version is current.
    pub end: Option<Scn>,
    pub creator_txn: TxnId,
    /// Statement index within the creating transaction; `None` for loaded rows.
    pub creator_stmt: Option<u32>,
    /// Transaction whose commit closed this version.
    pub ended_by: Option<TxnId>,
}

impl TupleVersion {
    pub fn visible_at(&self, as_of: Scn) -> bool {
        self.begin <= as_of && self.end.is_none_or(|e| as_of < e)
    }
}

/// A snapshot resolves each row to the version valid at `as_of`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Snapshot {
    pub as_of: Scn,
}

impl Snapshot {
    pub fn resolve<'a>(&self, history: &'a RowHistory) -> Option<&'a TupleVersion> {
        // Versions are appended in begin order; the newest visible one wins.
        history.versions.iter().rev().find(|v| v.visible_at(self.as_of))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingWrite {
    pub xid: TxnId,
    pub stmt: u32,
    /// `None` marks a pending delete.
    pub values: Option<Vec<Value>>,
    /// Provisional SCN of the writing statement.
    pub scn: Scn,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowHistory {
    pub versions: Vec<TupleVersion>,
    pub pending: Option<PendingWrite>,
}

impl RowHistory {
    /// SCN of the last committed change (insert, update or delete) to this row.
    fn last_change(&self) -> Option<(Scn, TxnId)> {
        let head = self.versions.last()?;
        Some(match (head.end, head.ended_by) {
            (Some(end), Some(by)) => (end, by),
            _ => (head.begin, head.creator_txn),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table {
    pub schema: Schema,
    pub created_at: Scn,
    pub rows: BTreeMap<RowId, RowHistory>,
    next_row_id: u64,
}

impl Table {
    pub fn next_row_id(&self) -> RowId {
        RowId(self.next_row_id)
    }
}

/// A row of a transaction's read view.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewRow {
    pub row: RowId,
    pub values: Vec<Value>,
    pub creator_txn: TxnId,
    pub creator_stmt: Option<u32>,
    /// Begin SCN of the committed version, `None` for the reader's own write.
    pub begin: Option<Scn>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Storage {
    tables: BTreeMap<String, Table>,
    current: Scn,
}

impl Storage {
    pub fn new() -> Storage {
        Storage::default()
    }

    pub fn current_scn(&self) -> Scn {
        self.current
    }

    /// Issues a fresh SCN strictly greater than every earlier one.
    pub fn advance_scn(&mut self) -> Scn {
        self.current = Scn(self.current.0 + 1);
        self.current
    }

    pub fn create_table(&mut self, schema: Schema, initial_rows: Vec<Vec<Value>>) -> Result<()> {
        if self.tables.contains_key(&schema.table) {
            return Err(Error::DuplicateTable(schema.table));
        }
        for (i, c) in schema.columns.iter().enumerate() {
            if schema.columns[..i].iter().any(|o| o.name == c.name) {
                return Err(Error::DuplicateColumn {
                    table: schema.table.clone(),
                    column: c.name.clone(),
                });
            }
        }
        let at = self.current;
        let mut rows = BTreeMap::new();
        for (i, values) in initial_rows.into_iter().enumerate() {
            let values = schema.conform(values)?;
            let row = RowId(i as u64 + 1);
            rows.insert(
                row,
                RowHistory {
                    versions: vec![TupleVersion {
                        row,
                        values,
                        begin: at,
                        end: None,
                        creator_txn: LOADER_TXN,
                        creator_stmt: None,
                        ended_by: None,
                    }],
                    pending: None,
                },
            );
        }
        let next_row_id = rows.len() as u64 + 1;
        self.tables.insert(
            schema.table.clone(),
            Table {
                schema,
                created_at: at,
                rows,
                next_row_id,
            },
        );
        Ok(())
    }

    pub fn table(&self, name: &str) -> Result<&Table> {
        self.tables
            .get(name)
            .ok_or_else(|| Error::UnknownTable(name.to_string()))
    }

    fn table_mut(&mut self, name: &str) -> Result<&mut Table> {
        self.tables
            .get_mut(name)
            .ok_or_else(|| Error::UnknownTable(name.to_string()))
    }

    pub fn schema(&self, name: &str) -> Result<&Schema> {
        self.table(name).map(|t| &t.schema)
    }

    pub fn tables(&self) -> impl Iterator<Item = &Table> {
        self.tables.values()
    }

    pub fn table_names(&self) -> Vec<String> {
        self.tables.keys().cloned().collect()
    }

    fn check_scn(&self, as_of: Scn) -> Result<()> {
        if as_of > self.current {
            return Err(Error::FutureScn {
                requested: as_of,
                current: self.current,
            });
        }
        Ok(())
    }

    /// Committed versions visible at `as_of`, in row id order.
    pub fn scan_asof(&self, table: &str, as_of: Scn) -> Result<Vec<&TupleVersion>> {
        let t = self.table(table)?;
        self.check_scn(as_of)?;
        let snap = Snapshot { as_of };
        Ok(t.rows.values().filter_map(|h| snap.resolve(h)).collect())
    }

    /// Snapshot at `as_of` overlaid with the pending writes of `reader`.
    pub fn read_view(&self, table: &str, as_of: Scn, reader: TxnId) -> Result<Vec<ViewRow>> {
        let t = self.table(table)?;
        self.check_scn(as_of)?;
        let snap = Snapshot { as_of };
        let mut out = Vec::new();
        for (id, h) in &t.rows {
            match &h.pending {
                Some(p) if p.xid == reader => {
                    if let Some(values) = &p.values {
                        out.push(ViewRow {
                            row: *id,
                            values: values.clone(),
                            creator_txn: reader,
                            creator_stmt: Some(p.stmt),
                            begin: None,
                        });
                    }
                }
                _ => {
                    if let Some(v) = snap.resolve(h) {
                        out.push(ViewRow {
                            row: v.row,
                            values: v.values.clone(),
                            creator_txn: v.creator_txn,
                            creator_stmt: v.creator_stmt,
                            begin: Some(v.begin),
                        });
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn allocate_row_id(&mut self, table: &str) -> Result<RowId> {
        let t = self.table_mut(table)?;
        let id = RowId(t.next_row_id);
        t.next_row_id += 1;
        Ok(id)
    }

    /// Installs a pending write of `xid` to `row`.
    ///
    /// Fails with a write conflict when another transaction holds a pending
    /// write on the row, or when `snapshot` is given (snapshot isolation) and
    /// the row was changed by a commit after it.
    pub fn stage_write(
        &mut self,
        table: &str,
        row: RowId,
        write: PendingWrite,
        snapshot: Option<Scn>,
    ) -> Result<()> {
        let xid = write.xid;
        let t = self.table_mut(table)?;
        let h = t.rows.entry(row).or_default();
        if let Some(p) = &h.pending {
            if p.xid != xid {
                return Err(Error::WriteConflict {
                    xid,
                    other: p.xid,
                    table: table.to_string(),
                    row,
                });
            }
        }
        if let (Some(snap), Some((changed, by))) = (snapshot, h.last_change()) {
            if changed > snap && by != xid {
                return Err(Error::WriteConflict {
                    xid,
                    other: by,
                    table: table.to_string(),
                    row,
                });
            }
        }
        h.pending = Some(write);
        Ok(())
    }

    /// Turns the pending writes of `xid` on `rows` into committed versions.
    pub fn commit_writes(&mut self, xid: TxnId, commit: Scn, rows: &[(String, RowId)]) -> Result<()> {
        for (table, row) in rows {
            let t = self.table_mut(table)?;
            let Some(h) = t.rows.get_mut(row) else { continue };
            let Some(p) = h.pending.take_if(|p| p.xid == xid) else { continue };
            if let Some(head) = h.versions.last_mut() {
                if head.end.is_none() {
                    head.end = Some(commit);
                    head.ended_by = Some(xid);
                }
            }
            if let Some(values) = p.values {
                h.versions.push(TupleVersion {
                    row: *row,
                    values,
                    begin: commit,
                    end: None,
                    creator_txn: xid,
                    creator_stmt: Some(p.stmt),
                    ended_by: None,
                });
            }
        }
        // Rows inserted and deleted within the transaction leave no trace.
        for t in self.tables.values_mut() {
            t.rows.retain(|_, h| !h.versions.is_empty() || h.pending.is_some());
        }
        Ok(())
    }

    /// Drops the pending writes of `xid`.
    pub fn discard_writes(&mut self, xid: TxnId, rows: &[(String, RowId)]) {
        for (table, row) in rows {
            if let Some(t) = self.tables.get_mut(table) {
                let remove = match t.rows.get_mut(row) {
                    Some(h) => {
                        h.pending.take_if(|p| p.xid == xid);
                        h.versions.is_empty() && h.pending.is_none()
                    }
                    None => false,
                };
                if remove {
                    t.rows.remove(row);
                }
            }
        }
    }

    /// The committed version of `row` that began at `begin`.
    pub fn version(&self, table: &str, row: RowId, begin: Scn) -> Option<&TupleVersion> {
        self.tables
            .get(table)?
            .rows
            .get(&row)?
            .versions
            .iter()
            .find(|v| v.begin == begin)
    }

    /// Rows whose committed history was changed by `xid`.
    pub fn committed_writes(&self, xid: TxnId) -> Vec<(String, RowId)> {
        let mut out = Vec::new();
        for (name, t) in &self.tables {
            for (row, h) in &t.rows {
                if h
                    .versions
                    .iter()
                    .any(|v| v.creator_txn == xid || v.ended_by == Some(xid))
                {
                    out.push((name.clone(), *row));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn account() -> Schema {
        Schema::new(
            "account",
            &[("cust", ValueKind::Text), ("typ", ValueKind::Text), ("bal", ValueKind::Decimal)],
        )
    }

    fn fig2a() -> Storage {
        let mut s = Storage::new();
        s.create_table(
            account(),
            vec![
                vec!["Alice".into(), "Checking".into(), Value::Int(50)],
                vec!["Alice".into(), "Savings".into(), Value::Int(30)],
            ],
        )
        .unwrap();
        s
    }

    fn pending(xid: u64, stmt: u32, values: Option<Vec<Value>>, scn: Scn) -> PendingWrite {
        PendingWrite {
            xid: TxnId(xid),
            stmt,
            values,
            scn,
        }
    }

    #[test]
    fn initial_rows_are_open_loader_versions() {
        let s = fig2a();
        let rows = s.scan_asof("account", Scn(0)).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|v| v.end.is_none() && v.creator_stmt.is_none()));
        assert_eq!(rows[0].values[2], Value::dec(50));
    }

    #[test]
    fn duplicate_table_and_bad_arity_are_rejected() {
        let mut s = fig2a();
        assert!(matches!(s.create_table(account(), vec![]), Err(Error::DuplicateTable(_))));
        let mut s2 = Storage::new();
        let err = s2.create_table(account(), vec![vec!["x".into()]]).unwrap_err();
        assert!(matches!(err, Error::ArityMismatch { .. }));
        let mut s3 = Storage::new();
        s3.create_table(Schema::new("overdraft", &[("cust", ValueKind::Text), ("bal", ValueKind::Decimal)]), vec![])
            .unwrap();
        assert!(s3.scan_asof("overdraft", Scn(0)).unwrap().is_empty());
    }

    #[test]
    fn advance_scn_is_strictly_monotone() {
        let mut s = Storage::new();
        assert_eq!(s.advance_scn(), Scn(1));
        let a = s.advance_scn();
        let b = s.advance_scn();
        assert!(b > a);
    }

    #[test]
    fn pending_writes_are_invisible_until_commit() {
        let mut s = fig2a();
        let scn = s.advance_scn();
        let new = vec!["Alice".into(), "Checking".into(), Value::dec(-20)];
        s.stage_write("account", RowId(1), pending(1, 0, Some(new.clone()), scn), Some(Scn(0)))
            .unwrap();
        assert_eq!(s.scan_asof("account", scn).unwrap()[0].values[2], Value::dec(50));
        // own writes are visible to the writer only
        assert_eq!(s.read_view("account", scn, TxnId(1)).unwrap()[0].values, new);
        assert_eq!(s.read_view("account", scn, TxnId(2)).unwrap()[0].values[2], Value::dec(50));

        let commit = s.advance_scn();
        s.commit_writes(TxnId(1), commit, &[("account".into(), RowId(1))]).unwrap();
        assert_eq!(s.scan_asof("account", scn).unwrap()[0].values[2], Value::dec(50));
        assert_eq!(s.scan_asof("account", commit).unwrap()[0].values, new);
    }

    #[test]
    fn second_writer_conflicts() {
        let mut s = fig2a();
        let scn = s.advance_scn();
        s.stage_write("account", RowId(1), pending(1, 0, None, scn), Some(Scn(0))).unwrap();
        let err = s
            .stage_write("account", RowId(1), pending(2, 0, None, scn), Some(Scn(0)))
            .unwrap_err();
        assert!(matches!(err, Error::WriteConflict { other: TxnId(1), .. }));
    }

    #[test]
    fn snapshot_writer_conflicts_with_later_commit() {
        let mut s = fig2a();
        let t2_begin = s.advance_scn();
        let scn = s.advance_scn();
        s.stage_write("account", RowId(1), pending(1, 0, None, scn), None).unwrap();
        let c = s.advance_scn();
        s.commit_writes(TxnId(1), c, &[("account".into(), RowId(1))]).unwrap();
        // deleted by a commit after t2's snapshot
        let err = s
            .stage_write("account", RowId(1), pending(2, 0, None, scn), Some(t2_begin))
            .unwrap_err();
        assert!(matches!(err, Error::WriteConflict { other: TxnId(1), .. }));
        assert!(s.scan_asof("account", c).unwrap().len() == 1);
    }

    #[test]
    fn aborted_writes_leave_no_versions() {
        let mut s = fig2a();
        let scn = s.advance_scn();
        let id = s.allocate_row_id("account").unwrap();
        assert_eq!(id, RowId(3));
        s.stage_write(
            "account",
            id,
            pending(1, 0, Some(vec!["Bob".into(), "Checking".into(), Value::dec(1)]), scn),
            None,
        )
        .unwrap();
        s.discard_writes(TxnId(1), &[("account".into(), id)]);
        let now = s.advance_scn();
        for at in 0..=now.0 {
            assert_eq!(s.scan_asof("account", Scn(at)).unwrap().len(), 2);
        }
        // ids are never reused
        assert_eq!(s.allocate_row_id("account").unwrap(), RowId(4));
    }

    #[test]
    fn future_scn_is_rejected() {
        let s = fig2a();
        assert!(matches!(s.scan_asof("account", Scn(9)), Err(Error::FutureScn { .. })));
        assert!(matches!(s.scan_asof("nope", Scn(0)), Err(Error::UnknownTable(_))));
    }
}
