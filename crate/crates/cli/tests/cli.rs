//! Runs the `reenact` binary end to end.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value as Json;

use reenact_core::storage::Scn;
use reenact_core::value::Value;
use reenact_core::Engine;

fn workloads() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../workloads")
}

fn fig1() -> String {
    workloads().join("fig1.workload").display().to_string()
}

fn reenact(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reenact")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let o = reenact(args);
    assert_eq!(o.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn fails(args: &[&str], code: i32) -> String {
    let o = reenact(args);
    assert_eq!(o.status.code(), Some(code), "{args:?}: {}", String::from_utf8_lossy(&o.stdout));
    String::from_utf8(o.stderr).unwrap()
}

fn json(args: &[&str]) -> Json {
    let mut a = args.to_vec();
    a.extend(["--format", "json"]);
    serde_json::from_str(&ok(&a)).unwrap()
}

fn engine() -> Engine {
    let mut e = Engine::default();
    e.run_workload_text(&std::fs::read_to_string(fig1()).unwrap()).unwrap();
    e
}

#[test]
fn run_prints_the_final_write_skew_state() {
    let out = ok(&["run", &fig1()]);
    let lines: Vec<&str> = out.lines().map(str::trim_end).collect();
    assert!(lines.contains(&"T1 (S1) COMMITTED, 2 statements"), "{out}");
    assert!(lines.contains(&"T2 (S2) COMMITTED, 2 statements"), "{out}");
    let row = |typ: &str| {
        lines
            .iter()
            .find(|l| l.contains(typ))
            .map(|l| l.split_whitespace().collect::<Vec<_>>())
            .unwrap()
    };
    assert_eq!(row("Checking"), ["1", "Alice", "Checking", "-20.00"]);
    assert_eq!(row("Savings"), ["2", "Alice", "Savings", "-10.00"]);
    // The overdraft table is printed with a header only.
    let od = lines.iter().position(|l| l.starts_with("overdraft @ SCN")).unwrap();
    assert_eq!(lines.len(), od + 3, "{out}");
}

#[test]
fn run_json_matches_the_engine() {
    let doc = json(&["run", &fig1()]);
    let e = engine();
    let now: Scn = e.storage().current_scn();
    assert_eq!(doc["scn"], now.0);
    for name in e.storage().table_names() {
        let rows: Vec<(u64, Vec<Value>)> = e
            .storage()
            .scan_asof(&name, now)
            .unwrap()
            .into_iter()
            .map(|v| (v.row.0, v.values.clone()))
            .collect();
        let got: Vec<(u64, Vec<Value>)> = doc["tables"][&name]["rows"]
            .as_array()
            .unwrap()
            .iter()
            .map(|r| (r["rowId"].as_u64().unwrap(), serde_json::from_value(r["values"].clone()).unwrap()))
            .collect();
        assert_eq!(got, rows, "{name}");
    }
    assert_eq!(doc["summary"]["transactions"].as_array().unwrap().len(), 2);
}

#[test]
fn debug_shows_checking_50_as_insert_input() {
    let out = ok(&["debug", "T2", "--workload", &fig1()]);
    let insert = &out[out.find("== [1] INSERT INTO overdraft").expect("insert column")..];
    let account = &insert[insert.find("-- account (input)").expect("account is input")..];
    let checking = account.lines().find(|l| l.contains("Checking")).unwrap();
    assert_eq!(
        checking.split_whitespace().collect::<Vec<_>>(),
        ["1", "Alice", "Checking", "50.00", "account:1@0"]
    );
    // The JSON rendering carries the same value.
    let doc = json(&["debug", "T2", "--workload", &fig1()]);
    let rows = doc["columns"][2]["tables"]["account"]["rows"].as_array().unwrap();
    let c = rows.iter().find(|r| r["values"][1] == "Checking").unwrap();
    assert_eq!(c["values"][2], serde_json::json!({"decimal": "50.00"}));
}

#[test]
fn debug_flags() {
    let all = json(&["debug", "T1", "--all", "--workload", &fig1()]);
    assert_eq!(all["showUnaffected"], true);
    assert_eq!(all["columns"][1]["tables"]["account"]["rows"].as_array().unwrap().len(), 2);
    let some = json(&["debug", "T1", "--tables", "overdraft", "--workload", &fig1()]);
    assert_eq!(some["tables"], serde_json::json!(["overdraft"]));
}

#[test]
fn history_show_and_prov() {
    let h = json(&["history", "--workload", &fig1()]);
    assert_eq!(h.as_array().unwrap().len(), 2);
    let e = engine();
    let c1 = e.txn(reenact_core::storage::TxnId(1)).unwrap().commit_scn.unwrap().0;
    let h = json(&["history", "--from", &(c1 + 1).to_string(), "--workload", &fig1()]);
    assert_eq!(h.as_array().unwrap().len(), 1);

    let show = ok(&["show", "2", "--workload", &fig1()]);
    assert!(show.starts_with("T2  session S2  SNAPSHOT  COMMITTED\n"), "{show}");
    assert!(show.contains("binds: :amount = 40, :name = 'Alice', :type = 'Savings'"), "{show}");

    let g = json(&["prov", "T1", "account", "1", "0", "--workload", &fig1()]);
    assert_eq!(g["root"], "account:1#T1.s0");
    assert_eq!(g["edges"], serde_json::json!([{"from": "account:1#T1.s0", "to": "account:1@0"}]));
    let text = ok(&["prov", "T1", "account", "1", "--workload", &fig1()]);
    assert!(text.contains("account:1#T1.s0 -> account:1@0"), "{text}");
}

#[test]
fn whatif_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let identity = dir.path().join("identity.json");
    std::fs::write(&identity, "{}").unwrap();
    let out = ok(&["whatif", "T2", identity.to_str().unwrap(), "--workload", &fig1()]);
    assert!(out.starts_with("would abort: no\ndivergence: none\n"), "{out}");

    let promo = workloads().join("promotion.json");
    let r = json(&["whatif", "T2", promo.to_str().unwrap(), "--workload", &fig1()]);
    assert!(r["wouldAbort"].is_object(), "{r}");
    assert_eq!(r["wouldAbort"]["conflictingXid"], 1);

    let err = fails(&["whatif", "T1", promo.to_str().unwrap(), "--workload", &fig1()], 1);
    assert!(err.starts_with("error[invalid_scenario]"), "{err}");
}

#[test]
fn output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("s.json");
    std::fs::write(&sc, r#"{"dataEdits": [{"table": "account", "rows": [{"rowId": 1, "values": ["Alice", "Checking", 100]}]}]}"#)
        .unwrap();
    let f = fig1();
    let cases: Vec<Vec<&str>> = vec![
        vec!["run", &f],
        vec!["history", "--workload", &f],
        vec!["show", "T1", "--workload", &f],
        vec!["debug", "T2", "--all", "--workload", &f],
        vec!["prov", "T2", "account", "2", "--workload", &f],
        vec!["whatif", "T1", sc.to_str().unwrap(), "--workload", &f],
        vec!["verify", "--seeds", "15", "--seed", "7"],
    ];
    for args in cases {
        for fmt in ["table", "json"] {
            let mut a = args.clone();
            a.extend(["--format", fmt]);
            assert_eq!(ok(&a), ok(&a), "{a:?}");
        }
    }
}

#[test]
fn verify_reports_counts_and_seed() {
    let out = ok(&["verify", "--seeds", "40", "--seed", "20160301"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "seed 20160301");
    assert_eq!(lines[1], "40/40 histories equivalent");
    let r = json(&["verify", "--seeds", "10"]);
    assert_eq!(r["passed"], 10);
    assert_eq!(r["failures"], serde_json::json!([]));
}

#[test]
fn state_persists_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("state.json");
    let s = state.to_str().unwrap();
    ok(&["run", &fig1(), "--state", s]);
    let more = dir.path().join("more.workload");
    std::fs::write(
        &more,
        "S3: BEGIN ISOLATION LEVEL READ COMMITTED;\nS3: UPDATE account SET bal = bal + 100 WHERE typ = 'Checking';\nS3: COMMIT;\n",
    )
    .unwrap();
    let out = ok(&["run", more.to_str().unwrap(), "--state", s]);
    assert!(out.contains("T3 (S3) COMMITTED"), "{out}");
    assert!(out.contains("80.00"), "{out}");
    assert_eq!(json(&["history", "--state", s]).as_array().unwrap().len(), 3);
    // Debugging the old transactions still works from the saved state.
    assert_eq!(ok(&["debug", "T2", "--state", s]), ok(&["debug", "T2", "--workload", &fig1()]));

    // Export, then re-import the log into the state.
    let log = dir.path().join("log.jsonl");
    let l = log.to_str().unwrap();
    ok(&["export-log", l, "--state", s]);
    let text = std::fs::read_to_string(&log).unwrap();
    assert_eq!(text.lines().count(), 1 + 11);
    let out = ok(&["import-log", l, "--state", s]);
    assert!(out.starts_with("imported 11 log entries (3 transactions)"), "{out}");

    // A log that is ahead of the stored data is rejected and the state kept.
    let other = tempfile::tempdir().unwrap();
    let small = other.path().join("state.json");
    let setup = other.path().join("setup.workload");
    std::fs::write(&setup, "setup: CREATE TABLE account (cust TEXT, typ TEXT, bal DECIMAL);\n").unwrap();
    ok(&["run", setup.to_str().unwrap(), "--state", small.to_str().unwrap()]);
    let before = std::fs::read(&small).unwrap();
    let err = fails(&["import-log", l, "--state", small.to_str().unwrap()], 1);
    assert!(err.starts_with("error[future_scn]"), "{err}");
    assert_eq!(std::fs::read(&small).unwrap(), before);
}

#[test]
fn domain_errors_exit_1_with_codes() {
    let err = fails(&["show", "T9", "--workload", &fig1()], 1);
    assert_eq!(err.trim_end(), "error[txn_not_found]: unknown transaction 9");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.workload");
    std::fs::write(&bad, "setup: CREATE TABLE t (a INT);\nS1: BEGIN;\nS1: UPDATE t SET a = ;\nS1: COMMIT;\n").unwrap();
    let err = fails(&["run", bad.to_str().unwrap()], 1);
    assert!(err.starts_with("error[syntax_error]"), "{err}");
    assert!(err.trim_end().ends_with("(line 3, column 22)"), "{err}");

    let err = fails(&["run", bad.to_str().unwrap(), "--format", "json"], 1);
    let doc: Json = serde_json::from_str(&err).unwrap();
    assert_eq!(doc["code"], "syntax_error");
    assert_eq!(doc["position"], serde_json::json!({"line": 3, "column": 22}));

    let err = fails(&["run", "/nonexistent/x.workload"], 1);
    assert!(err.starts_with("error[io_error]"), "{err}");
    let err = fails(&["debug", "T1", "--tables", "nope", "--workload", &fig1()], 1);
    assert!(err.starts_with("error[unknown_table]"), "{err}");
}

#[test]
fn usage_errors_exit_2() {
    fails(&[], 2);
    fails(&["bogus"], 2);
    fails(&["prov", "T1", "account"], 2);
    fails(&["prov", "T1", "account", "x", "--workload", &fig1()], 2);
    fails(&["verify", "--seeds", "-1"], 2);
    fails(&["history", "--format", "xml", "--workload", &fig1()], 2);
    let err = fails(&["history"], 2);
    assert!(err.contains("--state"), "{err}");
    let err = fails(&["show", "X1", "--workload", &fig1()], 2);
    assert!(err.contains("invalid transaction id"), "{err}");
    fails(&["import-log", "x.jsonl"], 2);
    fails(&["history", "--state", "a", "--workload", "b"], 2);
    assert!(ok(&["--help"]).contains("verify"));
}

#[test]
fn serve_answers_http() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_reenact"))
        .args(["serve", "--port", "0", "--workload", &fig1()])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on http://").expect(&line).to_string();

    let get = |path: &str| {
        let mut s = TcpStream::connect(&addr).unwrap();
        write!(s, "GET {path} HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").unwrap();
        let mut resp = String::new();
        s.read_to_string(&mut resp).unwrap();
        resp
    };
    let resp = get("/api/transactions/T2");
    child.kill().ok();
    child.wait().ok();
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    let body: Json = serde_json::from_str(&resp[resp.find("\r\n\r\n").unwrap() + 4..]).unwrap();
    assert_eq!(body["session"], "S2");
}
