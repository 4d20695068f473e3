//! Plain-text renderings. Everything here is a pure function of its input,
//! so identical histories print byte-identical output.

use std::fmt::Write;

use serde_json::json;

use reenact_core::audit::TransactionSummary;
use reenact_core::engine::RunSummary;
use reenact_core::provenance::{DebugView, ProvenanceGraph};
use reenact_core::storage::LOADER_TXN;
use reenact_core::value::Value;
use reenact_core::verify::VerifyReport;
use reenact_core::whatif::WhatIfResult;
use reenact_core::{Engine, Error, Result};

/// Rows of every table at the current SCN, as `{table: {columns, rows}}`.
pub fn final_tables(e: &Engine) -> Result<serde_json::Value> {
    let scn = e.storage().current_scn();
    let mut out = serde_json::Map::new();
    for name in e.storage().table_names() {
        let schema = e.storage().schema(&name)?;
        let rows: Vec<_> = e
            .storage()
            .scan_asof(&name, scn)?
            .into_iter()
            .map(|v| json!({"rowId": v.row, "values": v.values}))
            .collect();
        let columns: Vec<_> = schema.columns.iter().map(|c| c.name.clone()).collect();
        out.insert(name, json!({"columns": columns, "rows": rows}));
    }
    Ok(serde_json::Value::Object(out))
}

/// Column-aligned text table.
fn grid(header: &[&str], rows: &[Vec<String>], indent: &str) -> String {
    let mut width: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &mut dyn Iterator<Item = &str>| {
        let s: Vec<String> = cells.zip(&width).map(|(c, w)| format!("{c:<w$}")).collect();
        format!("{indent}{}\n", s.join("  ").trim_end())
    };
    let mut out = line(&mut header.iter().copied());
    let rule: Vec<String> = width.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&line(&mut rule.iter().map(String::as_str)));
    for r in rows {
        out.push_str(&line(&mut r.iter().map(String::as_str)));
    }
    out
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or("-".into(), |x| x.to_string())
}

fn values(v: &[Value]) -> Vec<String> {
    v.iter().map(Value::to_string).collect()
}

fn binds(b: &reenact_core::sql::BindParams) -> String {
    b.iter().map(|(k, v)| format!("{k} = {}", v.to_sql())).collect::<Vec<_>>().join(", ")
}

pub fn error(e: &Error) -> String {
    match e.position() {
        Some(p) => format!("error[{}]: {e} (line {}, column {})", e.code(), p.line, p.column),
        None => format!("error[{}]: {e}", e.code()),
    }
}

pub fn run(e: &Engine, summary: &RunSummary, tables: &serde_json::Value) -> String {
    let mut out = String::new();
    for t in &summary.transactions {
        let state = format!("{:?}", t.state).to_uppercase();
        let _ = write!(out, "T{} ({}) {state}, {} statements", t.xid, t.session, t.statements);
        if let Some(c) = &t.conflict {
            let _ = write!(out, ": {c}");
        }
        out.push('\n');
    }
    for (line, q) in &summary.selects {
        let _ = writeln!(out, "\nSELECT on line {line}:");
        let header: Vec<&str> = q.columns.iter().map(String::as_str).collect();
        let rows: Vec<_> = q.rows.iter().map(|r| values(r)).collect();
        out.push_str(&grid(&header, &rows, "  "));
    }
    let scn = e.storage().current_scn();
    for (name, t) in tables.as_object().into_iter().flatten() {
        let _ = writeln!(out, "\n{name} @ SCN {scn}");
        let mut header = vec!["rowid"];
        header.extend(t["columns"].as_array().into_iter().flatten().filter_map(|c| c.as_str()));
        let rows: Vec<Vec<String>> = t["rows"]
            .as_array()
            .into_iter()
            .flatten()
            .map(|r| {
                let mut cells = vec![r["rowId"].to_string()];
                let vals: Vec<Value> = serde_json::from_value(r["values"].clone()).unwrap_or_default();
                cells.extend(values(&vals));
                cells
            })
            .collect();
        out.push_str(&grid(&header, &rows, "  "));
    }
    out
}

pub fn history(list: &[TransactionSummary]) -> String {
    let rows: Vec<Vec<String>> = list
        .iter()
        .map(|t| {
            vec![
                format!("T{}", t.xid),
                t.session.clone(),
                t.isolation.to_string(),
                format!("{:?}", t.state).to_uppercase(),
                t.begin_scn.to_string(),
                opt(t.end_scn()),
                t.statements.len().to_string(),
            ]
        })
        .collect();
    grid(&["XID", "SESSION", "ISOLATION", "STATE", "BEGIN", "END", "STATEMENTS"], &rows, "")
}

pub fn transaction(t: &TransactionSummary) -> String {
    let mut out = format!(
        "T{}  session {}  {}  {}\n",
        t.xid,
        t.session,
        t.isolation,
        format!("{:?}", t.state).to_uppercase()
    );
    let clock = |c: Option<chrono::DateTime<chrono::Utc>>| opt(c.map(|c| c.format("%Y-%m-%d %H:%M:%S")));
    let _ = writeln!(out, "begin  SCN {} ({})", t.begin_scn, clock(t.begin_wall_clock));
    match (t.commit_scn, t.abort_scn) {
        (Some(s), _) => {
            let _ = writeln!(out, "commit SCN {s} ({})", clock(t.end_wall_clock));
        }
        (_, Some(s)) => {
            let _ = writeln!(out, "abort  SCN {s} ({})", clock(t.end_wall_clock));
        }
        _ => {}
    }
    for s in &t.statements {
        let _ = writeln!(out, "[{}] SCN {}..{}  {}", s.stmt_index, s.start_scn, opt(s.end_scn), s.sql_text);
        if !s.binds.is_empty() {
            let _ = writeln!(out, "    binds: {}", binds(&s.binds));
        }
    }
    out
}

pub fn debug(v: &DebugView) -> String {
    let mut out = format!(
        "T{} {} ({})\n",
        v.xid,
        v.isolation,
        if v.show_unaffected { "all rows" } else { "affected rows" }
    );
    for c in &v.columns {
        match (c.stmt_index, &c.sql_text) {
            (Some(i), Some(sql)) => {
                let _ = writeln!(out, "\n== [{i}] {sql}");
            }
            _ => out.push_str("\n== initial state\n"),
        }
        if !c.binds.is_empty() {
            let _ = writeln!(out, "   binds: {}", binds(&c.binds));
        }
        if let Some(sql) = &c.reenactment_sql {
            let _ = writeln!(out, "   reenactment: {sql}");
        }
        for (name, t) in &c.tables {
            let role = format!("{:?}", t.role).to_lowercase();
            let hidden = if t.hidden > 0 { format!(", {} hidden", t.hidden) } else { String::new() };
            let _ = writeln!(out, "-- {name} ({role}{hidden})");
            let mut header = vec!["", "rowid"];
            header.extend(t.columns.iter().map(String::as_str));
            header.extend(["version", "derived from"]);
            let rows: Vec<Vec<String>> = t
                .rows
                .iter()
                .map(|r| {
                    let mut cells = vec![if r.affected { "*" } else { "" }.to_string(), r.row_id.to_string()];
                    cells.extend(values(&r.values));
                    cells.push(r.version.to_string());
                    cells.push(r.provenance.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(" "));
                    cells
                })
                .collect();
            out.push_str(&grid(&header, &rows, "   "));
        }
    }
    out
}

pub fn graph(g: &ProvenanceGraph) -> String {
    let mut out = format!("root {}\n\nnodes:\n", g.root);
    let rows: Vec<Vec<String>> = g
        .nodes
        .iter()
        .map(|n| {
            vec![
                n.id.to_string(),
                format!("[{}]", values(&n.values).join(", ")),
                match (n.creator_txn, n.stmt_index) {
                    (Some(t), _) if t == LOADER_TXN => "initial load".into(),
                    (Some(t), Some(s)) => format!("T{t} stmt {s}"),
                    (Some(t), None) => format!("T{t}"),
                    _ => "initial".into(),
                },
                opt(n.scn.map(|s| format!("SCN {s}"))),
            ]
        })
        .collect();
    out.push_str(&grid(&["version", "values", "created by", "at"], &rows, "  "));
    out.push_str("\nedges (derived -> source):\n");
    for e in &g.edges {
        let _ = writeln!(out, "  {} -> {}", e.from, e.to);
    }
    out
}

pub fn whatif(r: &WhatIfResult) -> String {
    let mut out = String::new();
    match &r.would_abort {
        Some(w) => {
            let _ = writeln!(
                out,
                "would abort: statement {} writes {} row {}, committed concurrently by T{}",
                w.stmt_index, w.table, w.row_id, w.conflicting_xid
            );
        }
        None => out.push_str("would abort: no\n"),
    }
    if r.divergence.is_empty() {
        out.push_str("divergence: none\n");
    } else {
        out.push_str("divergence:\n");
        for (t, d) in r.divergence.tables.iter().filter(|(_, d)| !d.is_empty()) {
            let _ = writeln!(out, "  {t}:");
            for row in &d.only_in_original {
                let _ = writeln!(out, "    - row {} [{}]", row.row_id, values(&row.values).join(", "));
            }
            for row in &d.only_in_scenario {
                let _ = writeln!(out, "    + row {} [{}]", row.row_id, values(&row.values).join(", "));
            }
            for row in &d.changed {
                for c in &row.changes {
                    let _ = writeln!(out, "    ~ row {} {}: {} -> {}", row.row_id, c.column, c.old, c.new);
                }
            }
        }
    }
    out.push('\n');
    out.push_str(&debug(&r.debug_view));
    out
}

pub fn verify(r: &VerifyReport) -> String {
    let s = &r.stats;
    let mut out = format!("seed {}\n{}\n", r.seed, r.summary());
    let _ = writeln!(
        out,
        "transactions: {} snapshot, {} read committed; {} statements, {} prefixes, {} provenance rows, {} graphs",
        s.snapshot_txns, s.read_committed_txns, s.statements, s.prefixes, s.provenance_rows, s.graphs
    );
    for f in &r.failures {
        let _ = writeln!(out, "\nFAILED seed {}: {}", f.seed, f.message);
        out.push_str("minimized reproduction:\n");
        out.push_str(&f.script);
        if !f.script.ends_with('\n') {
            out.push('\n');
        }
    }
    out
}
