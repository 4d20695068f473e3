//! Workload scripts: `<session> : <command> ;` per line.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::sql::parser::{parse_command, Command};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkloadLine {
    pub session: String,
    pub command: Command,
    /// Statement text as written, without the trailing semicolon.
    pub text: String,
    pub line: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WorkloadScript {
    pub lines: Vec<WorkloadLine>,
}

impl WorkloadScript {
    pub fn sessions(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for l in &self.lines {
            if !out.contains(&l.session.as_str()) {
                out.push(&l.session);
            }
        }
        out
    }

    /// Renders the script back into the line format.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for l in &self.lines {
            s.push_str(&format!("{}: {};\n", l.session, l.text));
        }
        s
    }
}

/// Parses a workload script and checks each session's lifecycle.
pub fn parse_workload(text: &str) -> Result<WorkloadScript> {
    let mut lines = Vec::new();
    let mut open: BTreeMap<String, bool> = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = strip_comment(raw).trim();
        if content.is_empty() {
            continue;
        }
        let Some((session, rest)) = content.split_once(':') else {
            return Err(Error::Lifecycle {
                line,
                message: "expected '<session> : <command>;'".into(),
            });
        };
        let session = session.trim();
        if session.is_empty() || !session.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '-') {
            return Err(Error::Lifecycle {
                line,
                message: format!("invalid session id '{session}'"),
            });
        }
        let offset = raw[..rest.as_ptr() as usize - raw.as_ptr() as usize].chars().count();
        let command = parse_command(rest).map_err(|e| shift(e, offset).at_line(line))?;
        let active = open.entry(session.to_string()).or_insert(false);
        match &command {
            Command::Begin(_) if *active => {
                return Err(Error::Lifecycle {
                    line,
                    message: format!("nested BEGIN in session {session}"),
                })
            }
            Command::Begin(_) => *active = true,
            Command::Commit | Command::Abort if !*active => {
                return Err(Error::Lifecycle {
                    line,
                    message: format!("COMMIT/ABORT without BEGIN in session {session}"),
                })
            }
            Command::Commit | Command::Abort => *active = false,
            Command::Statement(_) if !*active => {
                return Err(Error::Lifecycle {
                    line,
                    message: format!("statement outside a transaction in session {session}"),
                })
            }
            Command::CreateTable { .. } if *active => {
                return Err(Error::Lifecycle {
                    line,
                    message: "CREATE TABLE inside a transaction".into(),
                })
            }
            _ => {}
        }
        let text = rest.trim().trim_end_matches(';').trim_end().to_string();
        lines.push(WorkloadLine {
            session: session.to_string(),
            command,
            text,
            line,
        });
    }
    if let Some((s, _)) = open.iter().find(|(_, a)| **a) {
        return Err(Error::Lifecycle {
            line: text.lines().count().max(1),
            message: format!("session {s} ends without COMMIT or ABORT"),
        });
    }
    Ok(WorkloadScript { lines })
}

/// Makes a syntax error's column relative to the whole script line.
fn shift(e: Error, by: usize) -> Error {
    match e {
        Error::Syntax {
            position,
            message,
            expected,
        } => Error::Syntax {
            position: crate::error::Position {
                line: position.line,
                column: position.column + by,
            },
            message,
            expected,
        },
        e => e,
    }
}

/// Removes a `--` comment, ignoring dashes inside string literals.
fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    let b = line.as_bytes();
    let mut i = 0;
    while i < b.len() {
        match b[i] {
            b'\'' => in_str = !in_str,
            b'-' if !in_str && b.get(i + 1) == Some(&b'-') => return &line[..i],
            _ => {}
        }
        i += 1;
    }
    line
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG1: &str = "\
-- write skew
S1: BEGIN ISOLATION LEVEL SNAPSHOT;
S1: UPDATE account SET bal = bal - 70 WHERE cust = 'Alice' AND typ = 'Checking';
S1: INSERT INTO overdraft (SELECT a1.cust, a1.bal + a2.bal FROM account a1, account a2 WHERE a1.cust = 'Alice' AND a1.cust = a2.cust AND a1.typ != a2.typ AND a1.bal + a2.bal < 0);
S2: BEGIN;
S2: UPDATE account SET bal = bal - 40 WHERE cust = 'Alice' AND typ = 'Savings';
S1: COMMIT;
S2: INSERT INTO overdraft (SELECT a1.cust, a1.bal + a2.bal FROM account a1, account a2 WHERE a1.cust = 'Alice' AND a1.cust = a2.cust AND a1.typ != a2.typ AND a1.bal + a2.bal < 0);
S2: COMMIT;
";

    #[test]
    fn fig1_interleaving_has_eight_commands() {
        let w = parse_workload(FIG1).unwrap();
        assert_eq!(w.lines.len(), 8);
        assert_eq!(w.sessions(), vec!["S1", "S2"]);
        assert_eq!(w.lines[0].line, 2);
        assert_eq!(parse_workload(&w.render()).unwrap().lines.len(), 8);
    }

    #[test]
    fn comments_only_is_empty() {
        assert!(parse_workload("-- nothing\n\n   -- here\n").unwrap().lines.is_empty());
    }

    #[test]
    fn commit_first_is_a_lifecycle_error() {
        let err = parse_workload("S1: COMMIT;").unwrap_err();
        assert!(matches!(err, Error::Lifecycle { line: 1, .. }), "{err}");
        assert!(matches!(
            parse_workload("S1: BEGIN;\nS1: BEGIN;\n"),
            Err(Error::Lifecycle { line: 2, .. })
        ));
        assert!(matches!(
            parse_workload("S1: DELETE FROM t;"),
            Err(Error::Lifecycle { line: 1, .. })
        ));
    }

    #[test]
    fn syntax_errors_carry_the_line() {
        let err = parse_workload("S1: BEGIN;\nS1: SELECT FROM t;\nS1: COMMIT;").unwrap_err();
        assert_eq!(err.position().unwrap().line, 2);
        let err = parse_workload("S1: BEGIN;\nS1:  SELEC 1;\nS1: COMMIT;").unwrap_err();
        assert_eq!(err.position().unwrap().column, 6);
    }

    #[test]
    fn dashes_inside_strings_survive() {
        let w = parse_workload("S1: BEGIN;\nS1: INSERT INTO t VALUES ('a--b'); -- c\nS1: COMMIT;").unwrap();
        assert_eq!(w.lines[1].text, "INSERT INTO t VALUES ('a--b')");
    }
}
