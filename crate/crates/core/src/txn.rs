//! Transaction metadata.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::storage::{RowId, Scn, TxnId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IsolationLevel {
    #[default]
    Snapshot,
    ReadCommitted,
}

impl IsolationLevel {
    pub fn sql(self) -> &'static str {
        match self {
            IsolationLevel::Snapshot => "SNAPSHOT",
            IsolationLevel::ReadCommitted => "READ COMMITTED",
        }
    }
}

impl fmt::Display for IsolationLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IsolationLevel::Snapshot => "SNAPSHOT",
            IsolationLevel::ReadCommitted => "READ_COMMITTED",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TxnState {
    Active,
    Committed,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TxnRecord {
    pub xid: TxnId,
    pub session: String,
    pub isolation: IsolationLevel,
    pub begin_scn: Scn,
    pub commit_scn: Option<Scn>,
    /// SCN of the ABORT, when aborted.
    pub end_scn: Option<Scn>,
    pub state: TxnState,
    pub write_set: BTreeSet<(String, RowId)>,
    /// Number of successfully executed statements.
    pub statements: u32,
}

impl TxnRecord {
    /// The SCN that ended the transaction, if it ended.
    pub fn finish_scn(&self) -> Option<Scn> {
        self.commit_scn.or(self.end_scn)
    }

    /// Snapshot used by statement reads under this transaction's isolation.
    pub fn read_scn(&self, stmt_scn: Scn) -> Scn {
        match self.isolation {
            IsolationLevel::Snapshot => self.begin_scn,
            IsolationLevel::ReadCommitted => stmt_scn,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StatementResult {
    pub affected_row_ids: BTreeSet<RowId>,
    pub inserted_row_ids: BTreeSet<RowId>,
    pub recorded_input_scn: Scn,
}
