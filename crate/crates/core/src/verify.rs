//! Randomized equivalence checking.
//!
//! Generates small seeded histories, runs them natively with recorded
//! states, and checks every committed transaction's reenactment (full and
//! per prefix) against the recorded states. Provenance is checked against a
//! brute-force witness oracle that re-runs each query over singleton inputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::algebra::{Evaluator, Relation, VersionRef};
use crate::engine::{Engine, EngineConfig, StateRow};
use crate::exec::{run_query, NRow};
use crate::par::{map_each, ExecMode};
use crate::provenance::annotate;
use crate::algebra::codegen::to_sql;
use crate::reenact::{evaluate_sql, reenact_transaction};
use crate::sql::analyze::{BoundInsertSource, BoundQuery, BoundStatement};
use crate::sql::parser::{parse_command, Command};
use crate::storage::{RowId, TxnId};
use crate::txn::{IsolationLevel, TxnState};
use crate::value::{cmp_rows, Value};

const NAMES: [&str; 3] = ["A", "B", "C"];
const MAX_TXNS: usize = 5;
const MAX_STMTS: usize = 4;
const MAX_ROWS: usize = 8;

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub histories: usize,
    /// History `i` uses seed `seed + i`.
    pub seed: u64,
    pub mode: ExecMode,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            histories: 1000,
            seed: 0,
            mode: ExecMode::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct HistoryStats {
    pub snapshot_txns: usize,
    pub read_committed_txns: usize,
    /// Statements whose plan, generated SQL and provenance were checked.
    pub statements: usize,
    pub prefixes: usize,
    pub provenance_rows: usize,
    pub graphs: usize,
}

impl HistoryStats {
    fn add(&mut self, o: &HistoryStats) {
        self.snapshot_txns += o.snapshot_txns;
        self.read_committed_txns += o.read_committed_txns;
        self.statements += o.statements;
        self.prefixes += o.prefixes;
        self.provenance_rows += o.provenance_rows;
        self.graphs += o.graphs;
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Failure {
    pub seed: u64,
    pub message: String,
    /// Minimized workload that still fails.
    pub script: String,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct VerifyReport {
    pub seed: u64,
    pub histories: usize,
    pub passed: usize,
    pub stats: HistoryStats,
    pub failures: Vec<Failure>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn summary(&self) -> String {
        format!("{}/{} histories equivalent", self.passed, self.histories)
    }
}

pub fn verify(opts: &VerifyOptions) -> VerifyReport {
    let seeds: Vec<u64> = (0..opts.histories as u64).map(|i| opts.seed.wrapping_add(i)).collect();
    // Histories are checked sequentially inside; the parallelism is across
    // histories.
    let results = map_each(opts.mode, seeds, |seed| {
        let script = generate_history(seed);
        (seed, check_history(&script, ExecMode::Sequential), script)
    });
    let mut stats = HistoryStats::default();
    let mut failures = Vec::new();
    for (seed, r, script) in results {
        match r {
            Ok(s) => stats.add(&s),
            Err(message) => failures.push(Failure {
                seed,
                message,
                script: shrink(&script, |s| check_history(s, ExecMode::Sequential).is_err()),
            }),
        }
    }
    VerifyReport {
        seed: opts.seed,
        histories: opts.histories,
        passed: opts.histories - failures.len(),
        stats,
        failures,
    }
}

// ---------------------------------------------------------------------------
// generation

struct Gen {
    rng: ChaCha8Rng,
}

impl Gen {
    fn name(&mut self) -> &'static str {
        NAMES.choose(&mut self.rng).expect("names")
    }

    fn val(&mut self) -> i64 {
        self.rng.gen_range(-3..=3)
    }

    /// Predicate over a table with columns `k` and `num`.
    fn pred(&mut self, q: &str, num: &str) -> String {
        let (n, c, v) = (self.name(), self.val(), self.val());
        match self.rng.gen_range(0..6) {
            0 => format!("{q}{num} > {c}"),
            1 => format!("{q}{num} <= {c}"),
            2 => format!("{q}k = '{n}'"),
            3 => format!("{q}{num} = {c} OR {q}k = '{n}'"),
            4 => format!("NOT {q}{num} < {c}"),
            _ => format!("{q}k <> '{n}' AND {q}{num} >= {v}"),
        }
    }

    fn table(&mut self) -> (&'static str, &'static str) {
        if self.rng.gen_bool(0.5) {
            ("r", "a")
        } else {
            ("s", "b")
        }
    }

    fn statement(&mut self) -> String {
        let (t, num) = self.table();
        match self.rng.gen_range(0..10) {
            0 | 1 => {
                let p = self.pred("", num);
                let c = self.val();
                format!("UPDATE {t} SET {num} = {num} + {c} WHERE {p}")
            }
            2 => {
                let p = self.pred("", num);
                let n = self.name();
                format!("UPDATE {t} SET k = '{n}', {num} = CASE WHEN {num} < 0 THEN -{num} ELSE {num} - 1 END WHERE {p}")
            }
            3 => {
                let p = self.pred("", num);
                format!("DELETE FROM {t} WHERE {p}")
            }
            4 => {
                let rows: Vec<String> = (0..self.rng.gen_range(1..=2))
                    .map(|_| format!("('{}', {})", self.name(), self.val()))
                    .collect();
                format!("INSERT INTO {t} VALUES {}", rows.join(", "))
            }
            5 => {
                let (u, unum) = self.table();
                let p = self.pred("", unum);
                let c = self.val();
                format!("INSERT INTO {t} (SELECT k, {unum} + {c} FROM {u} WHERE {p})")
            }
            6 => {
                let c = self.val();
                format!("INSERT INTO {t} (SELECT r.k, r.a + s.b FROM r, s WHERE r.k = s.k AND r.a > {c})")
            }
            7 => {
                let c = self.val();
                let p = self.pred("x.", "a");
                format!("INSERT INTO {t} (SELECT x.k, x.a FROM r x JOIN s y ON x.k = y.k AND y.b < {c} WHERE {p})")
            }
            8 => {
                let p1 = self.pred("", "a");
                let p2 = self.pred("", "b");
                format!("INSERT INTO {t} (SELECT k, a FROM r WHERE {p1} UNION ALL SELECT k, b FROM s WHERE {p2})")
            }
            _ => {
                let p = self.pred("", num);
                format!("SELECT k, {num} FROM {t} WHERE {p}")
            }
        }
    }
}

/// A random workload script: two tables, up to five interleaved
/// transactions of up to four statements, mixed isolation levels.
pub fn generate_history(seed: u64) -> String {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let mut out = format!("-- seed {seed}\n");
    for (t, num) in [("r", "a"), ("s", "b")] {
        let rows: Vec<String> = (0..g.rng.gen_range(0..=MAX_ROWS))
            .map(|_| format!("('{}', {})", g.name(), g.val()))
            .collect();
        if rows.is_empty() {
            let _ = writeln!(out, "setup: CREATE TABLE {t} (k TEXT, {num} INT);");
        } else {
            let _ = writeln!(out, "setup: CREATE TABLE {t} (k TEXT, {num} INT) AS VALUES {};", rows.join(", "));
        }
    }
    let mut sessions: Vec<Vec<String>> = (0..g.rng.gen_range(1..=MAX_TXNS))
        .map(|_| {
            let iso = if g.rng.gen_bool(0.5) {
                "SNAPSHOT"
            } else {
                "READ COMMITTED"
            };
            let mut cmds = vec![format!("BEGIN ISOLATION LEVEL {iso}")];
            for _ in 0..g.rng.gen_range(1..=MAX_STMTS) {
                cmds.push(g.statement());
            }
            cmds.push(if g.rng.gen_bool(0.1) { "ABORT" } else { "COMMIT" }.to_string());
            cmds.reverse();
            cmds
        })
        .collect();
    loop {
        let live: Vec<usize> = (0..sessions.len()).filter(|i| !sessions[*i].is_empty()).collect();
        let Some(&i) = live.choose(&mut g.rng) else { break };
        let cmd = sessions[i].pop().expect("live session");
        let _ = writeln!(out, "S{}: {cmd};", i + 1);
    }
    out
}

// ---------------------------------------------------------------------------
// checking

type Keyed = Vec<(RowId, Vec<Value>, VersionRef)>;

fn keyed_rel(rel: &Relation) -> std::result::Result<Keyed, String> {
    let mut v = rel
        .rows
        .iter()
        .map(|r| match (r.id, &r.version) {
            (Some(id), Some(ver)) => Ok((id, r.values.clone(), ver.clone())),
            _ => Err(format!("reenacted row without identity: {:?}", r.values)),
        })
        .collect::<std::result::Result<Keyed, String>>()?;
    v.sort_by_key(|a| a.0);
    Ok(v)
}

fn keyed_rows(rows: &[StateRow]) -> Keyed {
    let mut v: Keyed = rows.iter().map(|r| (r.id, r.values.clone(), r.version.clone())).collect();
    v.sort_by_key(|a| a.0);
    v
}

type Witnessed = Vec<(Vec<Value>, Vec<Option<VersionRef>>)>;

fn sort_witnessed(v: &mut Witnessed) {
    v.sort_by(|a, b| cmp_rows(&a.0, &b.0).then_with(|| a.1.cmp(&b.1)));
}

/// Every output row of `q` over `views`, with its witness, found by running
/// the query over each combination of at most one row per table access. A
/// combination is a witness of exactly the outputs whose provenance uses all
/// of its rows.
fn witness_oracle(q: &BoundQuery, views: &BTreeMap<String, Vec<StateRow>>) -> std::result::Result<Witnessed, String> {
    let mut accesses: Vec<String> = Vec::new();
    run_query(q, &mut |_, t, _| {
        accesses.push(t.to_string());
        Ok(Vec::new())
    })
    .map_err(|e| e.to_string())?;
    let candidates: Vec<Vec<Option<&StateRow>>> = accesses
        .iter()
        .map(|t| std::iter::once(None).chain(views[t].iter().map(Some)).collect())
        .collect();
    let mut out = Vec::new();
    let mut pick = vec![0usize; candidates.len()];
    loop {
        let chosen: Vec<Option<&StateRow>> = pick.iter().zip(&candidates).map(|(i, c)| c[*i]).collect();
        let want: Vec<Option<VersionRef>> = chosen.iter().map(|r| r.map(|r| r.version.clone())).collect();
        let rows = run_query(q, &mut |n, _, _| {
            Ok(chosen[n]
                .map(|r| NRow {
                    id: Some(r.id),
                    values: r.values.clone(),
                    prov: vec![Some(r.version.clone())],
                })
                .into_iter()
                .collect())
        })
        .map_err(|e| e.to_string())?;
        out.extend(rows.into_iter().filter(|r| r.prov == want).map(|r| (r.values, r.prov)));
        // Odometer over the candidate lists.
        let mut k = 0;
        loop {
            if k == pick.len() {
                return Ok(out);
            }
            pick[k] += 1;
            if pick[k] < candidates[k].len() {
                break;
            }
            pick[k] = 0;
            k += 1;
        }
    }
}

/// Runs one workload and checks every committed transaction.
pub fn check_history(script: &str, mode: ExecMode) -> std::result::Result<HistoryStats, String> {
    let mut engine = Engine::new(EngineConfig {
        mode,
        record_states: true,
        ..Default::default()
    });
    engine.run_workload_text(script).map_err(|e| format!("native run failed: {e}"))?;
    let mut stats = HistoryStats::default();
    let committed: Vec<(TxnId, IsolationLevel, u32)> = engine
        .transactions()
        .filter(|t| t.state == TxnState::Committed)
        .map(|t| (t.xid, t.isolation, t.statements))
        .collect();
    for (xid, iso, n) in committed {
        match iso {
            IsolationLevel::Snapshot => stats.snapshot_txns += 1,
            IsolationLevel::ReadCommitted => stats.read_committed_txns += 1,
        }
        check_transaction(&engine, xid, n, mode, &mut stats).map_err(|m| format!("T{xid} ({iso}): {m}"))?;
    }
    Ok(stats)
}

fn check_transaction(
    engine: &Engine,
    xid: TxnId,
    n: u32,
    mode: ExecMode,
    stats: &mut HistoryStats,
) -> std::result::Result<(), String> {
    let err = |e: crate::error::Error| e.to_string();
    let plan = reenact_transaction(engine, xid, None).map_err(err)?;
    let mut ev = Evaluator::new(engine.storage(), mode);
    for s in &plan.statements {
        let rec = engine
            .recorded(xid, s.index)
            .ok_or_else(|| format!("no recorded state for statement {}", s.index))?;
        for t in &plan.tables {
            let rv = keyed_rel(&ev.relation(plan.read_view(t, s.index).expect("read view")).map_err(err)?)?;
            if rv != keyed_rows(&rec.before[t]) {
                return Err(format!("statement {}: read view of {t} differs: {rv:?} vs {:?}", s.index, rec.before[t]));
            }
            let st = keyed_rel(&ev.relation(plan.state_after(t, s.index).expect("state")).map_err(err)?)?;
            if st != keyed_rows(&rec.after[t]) {
                return Err(format!("statement {}: state of {t} differs: {st:?} vs {:?}", s.index, rec.after[t]));
            }
        }
        let sql = to_sql(&s.output).map_err(err)?;
        let mut direct: Vec<Vec<Value>> = ev.relation(&s.output).map_err(err)?.rows.into_iter().map(|r| r.values).collect();
        let mut back: Vec<Vec<Value>> = evaluate_sql(engine, &sql)
            .map_err(|e| format!("statement {}: generated SQL fails: {e}\n{sql}", s.index))?
            .rows
            .into_iter()
            .map(|r| r.values)
            .collect();
        direct.sort_by(|a, b| cmp_rows(a, b));
        back.sort_by(|a, b| cmp_rows(a, b));
        if direct != back {
            return Err(format!("statement {}: generated SQL evaluates differently\n{sql}", s.index));
        }
        stats.statements += 1;
        check_provenance(&mut ev, s, xid, &plan, &rec.before, stats)?;
    }
    // Prefixes are planned independently of the full plan.
    for i in 0..n {
        let p = reenact_transaction(engine, xid, Some(i)).map_err(err)?;
        let rec = engine.recorded(xid, i).expect("checked above");
        let mut ev = Evaluator::new(engine.storage(), mode);
        for t in &p.tables {
            let st = keyed_rel(&ev.relation(p.final_state(t).expect("state")).map_err(err)?)?;
            if st != keyed_rows(&rec.after[t]) {
                return Err(format!("prefix upTo={i}: state of {t} differs"));
            }
        }
        stats.prefixes += 1;
    }
    let ann = annotate(engine, plan).map_err(err)?;
    for v in ann.edges.keys() {
        let g = ann.graph(v).map_err(err)?;
        if !g.is_layer_monotone() {
            return Err(format!("graph of {v} is not layer-monotone"));
        }
        stats.graphs += 1;
    }
    Ok(())
}

fn check_provenance(
    ev: &mut Evaluator<'_>,
    s: &crate::reenact::ReenactedStatement,
    xid: TxnId,
    plan: &crate::reenact::ReenactmentPlan,
    before: &BTreeMap<String, Vec<StateRow>>,
    stats: &mut HistoryStats,
) -> std::result::Result<(), String> {
    let err = |e: crate::error::Error| e.to_string();
    let produced = |rel: &Relation, t: &str| -> Vec<(Vec<Value>, Vec<Option<VersionRef>>, RowId)> {
        rel.rows
            .iter()
            .filter(|r| matches!(&r.version, Some(VersionRef::Intra { xid: x, stmt, .. }) if *x == xid && *stmt == s.index))
            .filter(|r| r.version.as_ref().is_some_and(|v| v.table() == t))
            .map(|r| (r.values.clone(), r.prov.clone(), r.id.unwrap_or(RowId(0))))
            .collect()
    };
    match &s.bound {
        BoundStatement::Update(u) => {
            let rel = ev.relation(plan.state_after(&u.table, s.index).expect("state")).map_err(err)?;
            for (_, prov, id) in produced(&rel, &u.table) {
                let pred = before[&u.table].iter().find(|r| r.id == id).map(|r| r.version.clone());
                let got: Vec<&VersionRef> = prov.iter().flatten().collect();
                if pred.is_none() || got != vec![pred.as_ref().unwrap()] {
                    return Err(format!("statement {}: {} row {id} has provenance {got:?}, expected {pred:?}", s.index, u.table));
                }
                stats.provenance_rows += 1;
            }
        }
        BoundStatement::Delete(d) => {
            // The witness of a deletion is the deleted version itself, which
            // must be in the statement's read view.
            let rel = ev.relation(plan.state_after(&d.table, s.index).expect("state")).map_err(err)?;
            let kept: Vec<RowId> = rel.rows.iter().filter_map(|r| r.id).collect();
            stats.provenance_rows += before[&d.table].iter().filter(|r| !kept.contains(&r.id)).count();
        }
        BoundStatement::Insert(ins) => {
            let rel = ev.relation(plan.state_after(&ins.table, s.index).expect("state")).map_err(err)?;
            let mut got: Witnessed = Vec::new();
            for (v, prov, _) in produced(&rel, &ins.table) {
                let w = match &ins.source {
                    BoundInsertSource::Query(q, _) => crate::exec::prov_width(q),
                    BoundInsertSource::Values(_) => 0,
                };
                got.push((v, prov[prov.len().saturating_sub(w)..].to_vec()));
            }
            let mut want: Witnessed = match &ins.source {
                BoundInsertSource::Values(rows) => rows.iter().map(|_| (Vec::new(), Vec::new())).collect(),
                BoundInsertSource::Query(q, casts) => witness_oracle(q, before)?
                    .into_iter()
                    .map(|(v, p)| {
                        let v = v
                            .into_iter()
                            .zip(casts)
                            .map(|(v, k)| match k {
                                Some(k) => v.coerce(*k),
                                None => Ok(v),
                            })
                            .collect::<crate::error::Result<Vec<_>>>()
                            .map_err(err)?;
                        Ok((v, p))
                    })
                    .collect::<std::result::Result<_, String>>()?,
            };
            if matches!(ins.source, BoundInsertSource::Values(_)) {
                // Constant rows have no witnesses; only the count is checked.
                got.iter_mut().for_each(|r| r.0.clear());
            }
            sort_witnessed(&mut got);
            sort_witnessed(&mut want);
            if got != want {
                return Err(format!("statement {}: insert provenance {got:?}, oracle {want:?}", s.index));
            }
            stats.provenance_rows += got.len();
        }
        BoundStatement::Select(q) => {
            let out = ev.relation(&s.output).map_err(err)?;
            let mut got: Witnessed = out.rows.iter().map(|r| (r.values.clone(), r.prov.clone())).collect();
            let mut want = witness_oracle(q, before)?;
            sort_witnessed(&mut got);
            sort_witnessed(&mut want);
            if got != want {
                return Err(format!("statement {}: query provenance {got:?}, oracle {want:?}", s.index));
            }
            stats.provenance_rows += got.len();
        }
        BoundStatement::ProvenanceOfQuery(_) | BoundStatement::ProvenanceOfTransaction(_) => {}
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// shrinking

/// Removes statements (and then whole sessions) while `fails` still holds.
pub fn shrink(script: &str, fails: impl Fn(&str) -> bool) -> String {
    let mut lines: Vec<String> = script
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with("--"))
        .map(str::to_string)
        .collect();
    let render = |ls: &[String]| ls.iter().map(|l| format!("{l}\n")).collect::<String>();
    loop {
        let mut progressed = false;
        // Whole sessions first, then single statements.
        let sessions: Vec<String> = lines
            .iter()
            .filter_map(|l| l.split_once(':').map(|(s, _)| s.trim().to_string()))
            .filter(|s| s != "setup")
            .fold(Vec::new(), |mut acc, s| {
                if !acc.contains(&s) {
                    acc.push(s);
                }
                acc
            });
        for s in sessions {
            let cand: Vec<String> = lines
                .iter()
                .filter(|l| l.split_once(':').map(|(x, _)| x.trim()) != Some(s.as_str()))
                .cloned()
                .collect();
            if fails(&render(&cand)) {
                lines = cand;
                progressed = true;
            }
        }
        let mut i = 0;
        while i < lines.len() {
            let removable = lines[i]
                .split_once(':')
                .is_some_and(|(s, cmd)| s.trim() != "setup" && matches!(parse_command(cmd.trim()), Ok(Command::Statement(_))));
            if removable {
                let mut cand = lines.clone();
                cand.remove(i);
                if fails(&render(&cand)) {
                    lines = cand;
                    progressed = true;
                    continue;
                }
            }
            i += 1;
        }
        if !progressed {
            return render(&lines);
        }
    }
}
