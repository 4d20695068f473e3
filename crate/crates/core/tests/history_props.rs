//! Storage, transaction and audit-log invariants over seeded random
//! histories, plus SQL front-end round trips.

use std::collections::BTreeSet;

use proptest::prelude::*;

use reenact_core::algebra::evaluate;
use reenact_core::audit::{AuditLog, EntryKind};
use reenact_core::par::ExecMode;
use reenact_core::reenact::reenact_transaction;
use reenact_core::sql::bind::{bind, BindParams};
use reenact_core::sql::{analyze, parse, parse_workload, Command};
use reenact_core::storage::Scn;
use reenact_core::txn::{IsolationLevel, TxnState};
use reenact_core::value::Value;
use reenact_core::verify::generate_history;
use reenact_core::{Engine, EngineConfig};

fn run(seed: u64) -> Engine {
    let mut e = Engine::new(EngineConfig {
        mode: ExecMode::Sequential,
        ..Default::default()
    });
    e.run_workload_text(&generate_history(seed)).unwrap();
    e
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn snapshots_resolve_to_at_most_one_version(seed in any::<u64>()) {
        let e = run(seed);
        let now = e.storage().current_scn().0;
        for t in e.storage().tables() {
            for (row, h) in &t.rows {
                for s in 0..=now {
                    let n = h.versions.iter().filter(|v| v.visible_at(Scn(s))).count();
                    prop_assert!(n <= 1, "{} row {} has {} versions at SCN {}", t.schema.table, row, n, s);
                }
                prop_assert!(h.pending.is_none());
            }
        }
    }

    #[test]
    fn aborted_transactions_leave_no_versions(seed in any::<u64>()) {
        let e = run(seed);
        let aborted: BTreeSet<_> = e.transactions().filter(|t| t.state == TxnState::Aborted).map(|t| t.xid).collect();
        for t in e.storage().tables() {
            for h in t.rows.values() {
                for v in &h.versions {
                    prop_assert!(!aborted.contains(&v.creator_txn));
                    prop_assert!(v.ended_by.is_none_or(|x| !aborted.contains(&x)));
                }
            }
        }
    }

    #[test]
    fn time_travel_is_stable_between_commits(seed in any::<u64>()) {
        let e = run(seed);
        let now = e.storage().current_scn().0;
        for name in e.storage().table_names() {
            let touched: BTreeSet<u64> = e
                .transactions()
                .filter(|t| t.state == TxnState::Committed && t.write_set.iter().any(|(tb, _)| *tb == name))
                .filter_map(|t| t.commit_scn.map(|c| c.0))
                .collect();
            for s in 1..=now {
                if !touched.contains(&s) {
                    prop_assert_eq!(
                        e.storage().scan_asof(&name, Scn(s - 1)).unwrap(),
                        e.storage().scan_asof(&name, Scn(s)).unwrap()
                    );
                }
            }
        }
    }

    #[test]
    fn first_updater_wins_under_snapshot(seed in any::<u64>()) {
        let e = run(seed);
        let si: Vec<_> = e
            .transactions()
            .filter(|t| t.state == TxnState::Committed && t.isolation == IsolationLevel::Snapshot)
            .collect();
        for (i, a) in si.iter().enumerate() {
            for b in &si[i + 1..] {
                let overlap = a.begin_scn < b.commit_scn.unwrap() && b.begin_scn < a.commit_scn.unwrap();
                if overlap {
                    prop_assert!(a.write_set.is_disjoint(&b.write_set), "T{} and T{}", a.xid, b.xid);
                }
            }
        }
    }

    #[test]
    fn audit_log_is_complete_and_ordered(seed in any::<u64>()) {
        let e = run(seed);
        let entries = e.log().entries();
        prop_assert!(entries.windows(2).all(|w| w[0].stmt_scn < w[1].stmt_scn));
        for t in e.transactions() {
            let mine: Vec<_> = entries.iter().filter(|x| x.xid == t.xid).collect();
            let count = |k: EntryKind| mine.iter().filter(|x| x.kind == k).count();
            prop_assert_eq!(count(EntryKind::Begin), 1);
            prop_assert_eq!(count(EntryKind::Commit) + count(EntryKind::Abort), 1);
            prop_assert_eq!(count(EntryKind::Dml), t.statements as usize);
        }
    }

    #[test]
    fn log_round_trip_alone_drives_reenactment(seed in any::<u64>()) {
        let e = run(seed);
        let text = e.export_log();
        let log = AuditLog::import_jsonl(&text).unwrap();
        prop_assert_eq!(log.entries(), e.log().entries());
        let fresh = Engine::from_parts(e.storage().clone(), log, EngineConfig::default()).unwrap();
        for t in e.transactions().filter(|t| t.state == TxnState::Committed) {
            let a = reenact_transaction(&e, t.xid, None).unwrap();
            let b = reenact_transaction(&fresh, t.xid, None).unwrap();
            for table in &a.tables {
                let ra = evaluate(e.storage(), a.final_state(table).unwrap(), ExecMode::Sequential).unwrap();
                let rb = evaluate(fresh.storage(), b.final_state(table).unwrap(), ExecMode::Sequential).unwrap();
                prop_assert_eq!(ra, rb);
            }
        }
    }

    #[test]
    fn statements_print_parse_and_analyze_identically(seed in any::<u64>()) {
        let text = generate_history(seed);
        let e = {
            let setup: String = text.lines().filter(|l| l.starts_with("setup:")).map(|l| format!("{l}\n")).collect();
            let mut e = Engine::default();
            e.run_workload_text(&setup).unwrap();
            e
        };
        for l in parse_workload(&text).unwrap().lines {
            let Command::Statement(stmt) = l.command else { continue };
            let printed = stmt.to_string();
            let again = parse(&printed).unwrap();
            prop_assert_eq!(&again, &stmt, "{}", printed);
            let a = analyze(&stmt, &e).unwrap();
            prop_assert_eq!(analyze(&again, &e).unwrap(), a.clone());
            // Analysis is deterministic and leaves the catalog alone.
            let h = e.content_hash();
            prop_assert_eq!(analyze(&stmt, &e).unwrap(), a);
            prop_assert_eq!(e.content_hash(), h);
        }
    }

    #[test]
    fn binding_is_idempotent(name in "[A-C]", amount in -100i64..100, typ in "Checking|Savings") {
        let mut p = BindParams::new();
        p.insert(":name".into(), Value::text(name));
        p.insert(":amount".into(), Value::Int(amount));
        p.insert(":type".into(), Value::text(typ));
        for sql in [
            "UPDATE account SET bal = bal - :amount WHERE cust = :name AND typ = :type",
            "INSERT INTO overdraft (SELECT a1.cust, a1.bal + a2.bal FROM account a1, account a2 \
             WHERE a1.cust = :name AND a1.cust = a2.cust AND a1.typ != a2.typ AND a1.bal + a2.bal < 0)",
        ] {
            let once = bind(&parse(sql).unwrap(), &p).unwrap();
            prop_assert_eq!(bind(&once, &p).unwrap(), once.clone());
            let printed = once.to_string();
            prop_assert!(!printed.contains(':'), "{}", printed);
            prop_assert_eq!(parse(&printed).unwrap(), once);
        }
    }
}

#[test]
fn fig1_workload_has_eight_commands_across_two_sessions() {
    let w = parse_workload(include_str!("../../../workloads/fig1.workload")).unwrap();
    let txn_commands = w
        .lines
        .iter()
        .filter(|l| l.session != "setup" && !matches!(l.command, Command::Bind(_)))
        .count();
    assert_eq!(txn_commands, 8);
    assert_eq!(w.sessions(), vec!["setup", "S1", "S2"]);
}

#[test]
fn empty_and_comment_only_scripts() {
    assert!(parse_workload("-- nothing\n\n").unwrap().lines.is_empty());
    let mut e = Engine::default();
    let before = e.content_hash();
    let r = e.run_workload_text("").unwrap();
    assert!(r.transactions.is_empty());
    assert_eq!(e.content_hash(), before);
    match parse_workload("S1: COMMIT;") {
        Err(reenact_core::Error::Lifecycle { line, .. }) => assert_eq!(line, 1),
        other => panic!("{other:?}"),
    }
}
