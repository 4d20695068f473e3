use thiserror::Error;

use crate::storage::{RowId, Scn, TxnId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Source position of a SQL or workload error, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct Position {
    pub line: usize,
    pub column: usize,
}

impl std::fmt::Display for Position {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at {position}: {message}")]
    Syntax {
        position: Position,
        message: String,
        expected: Vec<String>,
    },
    #[error("parameter {0} is not bound")]
    UnboundParameter(String),
    #[error("unknown table '{0}'")]
    UnknownTable(String),
    #[error("unknown column '{0}'")]
    UnknownColumn(String),
    #[error("ambiguous column reference '{name}' (candidates: {})", candidates.join(", "))]
    AmbiguousColumn { name: String, candidates: Vec<String> },
    #[error("type error: {0}")]
    TypeMismatch(String),
    #[error("table '{0}' already exists")]
    DuplicateTable(String),
    #[error("duplicate column '{column}' in table '{table}'")]
    DuplicateColumn { table: String, column: String },
    #[error("row for '{table}' has {found} values, expected {expected}")]
    ArityMismatch {
        table: String,
        expected: usize,
        found: usize,
    },
    #[error("scn {requested} is in the future (current scn is {current})")]
    FutureScn { requested: Scn, current: Scn },
    #[error("invalid range: from {from} is after to {to}")]
    InvalidRange { from: Scn, to: Scn },
    #[error("unknown transaction {0}")]
    UnknownTxn(TxnId),
    #[error("transaction {0} is not active")]
    TxnNotActive(TxnId),
    #[error("transaction {0} was aborted")]
    AbortedTxn(TxnId),
    #[error("session '{0}' already has an active transaction")]
    NestedBegin(String),
    #[error("session '{0}' has no active transaction")]
    NoActiveTxn(String),
    #[error("write conflict: transaction {xid} cannot write {table} row {row}, concurrently written by transaction {other}")]
    WriteConflict {
        xid: TxnId,
        other: TxnId,
        table: String,
        row: RowId,
    },
    #[error("line {line}: {message}")]
    Lifecycle { line: usize, message: String },
    #[error("line {line}: {source}")]
    Workload {
        line: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("division by zero")]
    DivisionByZero,
    #[error("arithmetic overflow")]
    Overflow,
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("malformed audit log at line {line}: {message}")]
    MalformedLog { line: usize, message: String },
    #[error("malformed state image: {0}")]
    MalformedState(String),
    #[error("cannot resolve tuple version {0}")]
    UnresolvedVersion(String),
    #[error("scenario statement {index}: {source}")]
    Scenario {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("incompatible views: {0}")]
    IncompatibleViews(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Machine-readable error code, stable across releases.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Syntax { .. } => "syntax_error",
            Error::UnboundParameter(_) => "unbound_parameter",
            Error::UnknownTable(_) => "unknown_table",
            Error::UnknownColumn(_) => "unknown_column",
            Error::AmbiguousColumn { .. } => "ambiguous_column",
            Error::TypeMismatch(_) => "type_error",
            Error::DuplicateTable(_) => "duplicate_table",
            Error::DuplicateColumn { .. } => "duplicate_column",
            Error::ArityMismatch { .. } => "arity_mismatch",
            Error::FutureScn { .. } => "future_scn",
            Error::InvalidRange { .. } => "invalid_range",
            Error::UnknownTxn(_) => "txn_not_found",
            Error::TxnNotActive(_) => "txn_not_active",
            Error::AbortedTxn(_) => "txn_aborted",
            Error::NestedBegin(_) => "nested_begin",
            Error::NoActiveTxn(_) => "no_active_txn",
            Error::WriteConflict { .. } => "write_conflict",
            Error::Lifecycle { .. } => "lifecycle_error",
            Error::Workload { source, .. } => source.code(),
            Error::DivisionByZero => "division_by_zero",
            Error::Overflow => "overflow",
            Error::Unsupported(_) => "unsupported",
            Error::MalformedLog { .. } => "malformed_log",
            Error::MalformedState(_) => "malformed_state",
            Error::UnresolvedVersion(_) => "version_not_found",
            Error::Scenario { source, .. } => source.code(),
            Error::InvalidScenario(_) => "invalid_scenario",
            Error::IncompatibleViews(_) => "incompatible_views",
            Error::Io(_) => "io_error",
        }
    }

    /// Source position for SQL errors, when known.
    pub fn position(&self) -> Option<Position> {
        match self {
            Error::Syntax { position, .. } => Some(*position),
            Error::Lifecycle { line, .. } => Some(Position {
                line: *line,
                column: 1,
            }),
            Error::Workload { line, source } => Some(source.position().map_or(
                Position {
                    line: *line,
                    column: 1,
                },
                |p| Position {
                    line: *line,
                    column: p.column,
                },
            )),
            Error::Scenario { source, .. } => source.position(),
            _ => None,
        }
    }

    pub(crate) fn at_line(self, line: usize) -> Error {
        Error::Workload {
            line,
            source: Box::new(self),
        }
    }
}
