//! Debug views and provenance graphs over evaluated reenactment plans.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use crate::algebra::codegen::to_sql;
use crate::algebra::translate::translate_query;
use crate::algebra::{Creator, Evaluator, Op, Relation, Rel, VersionRef};
use crate::engine::{Engine, QueryOutput};
use crate::error::{Error, Result};
use crate::sql::analyze::{analyze, BoundStatement};
use crate::sql::ast::JoinKind;
use crate::sql::bind::{bind, BindParams};
use crate::sql::parser::parse;
use crate::storage::{RowId, Scn, TxnId};
use crate::txn::IsolationLevel;
use crate::reenact::{reenact_transaction, ReenactmentPlan};
use crate::value::Value;

#[derive(Debug, Clone, Default)]
pub struct DebugOptions {
    pub show_unaffected: bool,
    /// Restrict the view to these tables.
    pub tables: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TableRole {
    /// State before the first statement.
    Initial,
    /// Written by the column's statement.
    Target,
    /// Read (but not written) by the column's statement.
    Input,
    Unchanged,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DebugRow {
    pub row_id: RowId,
    pub values: Vec<Value>,
    pub version: VersionRef,
    pub creator: Option<Creator>,
    /// Changed (updated or inserted) by this column's statement.
    pub affected: bool,
    /// Versions this version was derived from (only for affected rows).
    pub provenance: Vec<VersionRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TableView {
    pub role: TableRole,
    pub columns: Vec<String>,
    pub rows: Vec<DebugRow>,
    /// Rows left out by the affected-row filter.
    pub hidden: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DebugColumn {
    /// `None` for the initial-state column.
    pub stmt_index: Option<u32>,
    pub sql_text: Option<String>,
    pub binds: BindParams,
    /// SQL of the statement's reenactment query.
    pub reenactment_sql: Option<String>,
    pub tables: BTreeMap<String, TableView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DebugView {
    pub xid: TxnId,
    pub isolation: IsolationLevel,
    pub show_unaffected: bool,
    pub tables: Vec<String>,
    pub columns: Vec<DebugColumn>,
}

impl DebugView {
    pub fn column(&self, stmt: Option<u32>) -> Option<&DebugColumn> {
        self.columns.iter().find(|c| c.stmt_index == stmt)
    }

    /// Rows of `table` in the column of `stmt` (`None`: initial column).
    pub fn rows(&self, stmt: Option<u32>, table: &str) -> Option<&[DebugRow]> {
        Some(&self.column(stmt)?.tables.get(table)?.rows)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GraphNode {
    pub id: VersionRef,
    pub table: String,
    pub row_id: RowId,
    pub values: Vec<Value>,
    pub creator_txn: Option<TxnId>,
    pub stmt_index: Option<u32>,
    pub scn: Option<Scn>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct GraphEdge {
    /// The derived version.
    pub from: VersionRef,
    /// A version it was derived from.
    pub to: VersionRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProvenanceGraph {
    pub root: VersionRef,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

impl ProvenanceGraph {
    /// Whether every edge points to an earlier layer (initial state is
    /// layer 0, statement `i` creates layer `i + 1`), which implies
    /// acyclicity.
    pub fn is_layer_monotone(&self) -> bool {
        self.edges.iter().all(|e| layer(&e.from) > layer(&e.to))
    }
}

fn layer(v: &VersionRef) -> u64 {
    match v.stmt() {
        Some(s) => s as u64 + 1,
        None => 0,
    }
}

/// An evaluated plan: per column and table the annotated relation, plus the
/// derivation edges and node payloads.
pub struct Annotated {
    pub plan: ReenactmentPlan,
    /// Column 0 is the initial state, column `i + 1` follows statement `i`.
    pub columns: Vec<BTreeMap<String, Relation>>,
    pub edges: BTreeMap<VersionRef, BTreeSet<VersionRef>>,
    pub nodes: BTreeMap<VersionRef, GraphNode>,
    /// Rows deleted by some statement.
    pub deleted: BTreeSet<(String, RowId)>,
}

pub fn annotate(engine: &Engine, plan: ReenactmentPlan) -> Result<Annotated> {
    let mut ev = Evaluator::new(engine.storage(), engine.config().mode);
    let mut columns = Vec::with_capacity(plan.statements.len() + 1);
    let mut initial = BTreeMap::new();
    for t in &plan.tables {
        if let Some(rv) = plan.read_view(t, 0) {
            initial.insert(t.clone(), ev.relation(rv)?);
        }
    }
    columns.push(initial);
    let mut edges: BTreeMap<VersionRef, BTreeSet<VersionRef>> = BTreeMap::new();
    let mut nodes = BTreeMap::new();
    let mut deleted = BTreeSet::new();
    for s in &plan.statements {
        let mut col = BTreeMap::new();
        for t in &plan.tables {
            let rel = ev.relation(plan.state_after(t, s.index).expect("state per statement"))?;
            col.insert(t.clone(), rel);
        }
        if let BoundStatement::Delete(d) = &s.bound {
            let rv = plan.read_view(&d.table, s.index).expect("read view per statement");
            let before: BTreeSet<RowId> = ev.relation(rv)?.rows.iter().filter_map(|r| r.id).collect();
            let after: BTreeSet<RowId> = col[&d.table].rows.iter().filter_map(|r| r.id).collect();
            deleted.extend(before.difference(&after).map(|r| (d.table.clone(), *r)));
        }
        if let Some(t) = s.bound.target_table() {
            for r in col[t].rows.iter().filter(|r| r.affected) {
                let Some(v) = &r.version else { continue };
                let parents = edges.entry(v.clone()).or_default();
                parents.extend(r.prov.iter().flatten().filter(|p| *p != v).cloned());
            }
        }
        columns.push(col);
    }
    for (i, col) in columns.iter().enumerate() {
        let scn = i.checked_sub(1).map(|s| plan.statements[s].spec.stmt_scn);
        for (t, rel) in col {
            for r in &rel.rows {
                let (Some(v), Some(id)) = (&r.version, r.id) else { continue };
                nodes.entry(v.clone()).or_insert_with(|| GraphNode {
                    id: v.clone(),
                    table: t.clone(),
                    row_id: id,
                    values: r.values.clone(),
                    creator_txn: r.creator.map(|c| c.txn),
                    stmt_index: r.creator.and_then(|c| c.stmt),
                    scn: match v {
                        VersionRef::Committed { begin, .. } => Some(*begin),
                        VersionRef::Intra { .. } => scn,
                        VersionRef::Scenario { .. } => None,
                    },
                });
            }
        }
    }
    // Parents outside the view (e.g. AS OF reads) come from storage.
    let missing: Vec<VersionRef> = edges
        .values()
        .flatten()
        .filter(|p| !nodes.contains_key(*p))
        .cloned()
        .collect();
    for p in missing {
        if let VersionRef::Committed { table, row, begin } = &p {
            if let Some(v) = engine.storage().version(table, *row, *begin) {
                nodes.insert(
                    p.clone(),
                    GraphNode {
                        id: p.clone(),
                        table: table.to_string(),
                        row_id: *row,
                        values: v.values.clone(),
                        creator_txn: Some(v.creator_txn),
                        stmt_index: v.creator_stmt,
                        scn: Some(*begin),
                    },
                );
            }
        }
    }
    Ok(Annotated {
        plan,
        columns,
        edges,
        nodes,
        deleted,
    })
}

impl Annotated {
    /// Versions reachable from `root` (inclusive) via derivation edges.
    pub fn closure(&self, root: &VersionRef) -> BTreeSet<VersionRef> {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([root.clone()]);
        while let Some(v) = queue.pop_front() {
            if !seen.insert(v.clone()) {
                continue;
            }
            if let Some(ps) = self.edges.get(&v) {
                queue.extend(ps.iter().cloned());
            }
        }
        seen
    }

    pub fn graph(&self, root: &VersionRef) -> Result<ProvenanceGraph> {
        if !self.nodes.contains_key(root) {
            return Err(Error::UnresolvedVersion(root.to_string()));
        }
        let reach = self.closure(root);
        let nodes = reach
            .iter()
            .map(|v| {
                self.nodes
                    .get(v)
                    .cloned()
                    .ok_or_else(|| Error::UnresolvedVersion(v.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let edges = reach
            .iter()
            .flat_map(|v| {
                self.edges.get(v).into_iter().flatten().map(move |p| GraphEdge {
                    from: v.clone(),
                    to: p.clone(),
                })
            })
            .collect();
        Ok(ProvenanceGraph {
            root: root.clone(),
            nodes,
            edges,
        })
    }

    /// The version of `row` in `table` after statement `stmt` (`None`: after
    /// the last statement).
    pub fn version_of(&self, table: &str, row: RowId, stmt: Option<u32>) -> Result<VersionRef> {
        let col = match stmt {
            Some(s) if s as usize >= self.plan.statements.len() => None,
            Some(s) => self.columns.get(s as usize + 1),
            None => self.columns.last(),
        };
        col.and_then(|c| c.get(table))
            .and_then(|rel| rel.rows.iter().find(|r| r.id == Some(row)))
            .and_then(|r| r.version.clone())
            .ok_or_else(|| {
                Error::UnresolvedVersion(format!(
                    "{table}:{row} after statement {}",
                    stmt.map_or("last".to_string(), |s| s.to_string())
                ))
            })
    }

    /// Rows shown by the default filter: every row touched by a statement,
    /// plus every row in the provenance of a touched row.
    pub fn relevant_rows(&self) -> BTreeSet<(String, RowId)> {
        let mut keep: BTreeSet<(String, RowId)> = self.deleted.clone();
        for v in self.edges.keys() {
            for u in self.closure(v) {
                keep.insert((u.table().to_string(), u.row()));
            }
        }
        keep
    }

    pub fn debug_view(&self, opts: &DebugOptions) -> Result<DebugView> {
        let tables: Vec<String> = match &opts.tables {
            Some(ts) => {
                for t in ts {
                    if !self.plan.tables.contains(t) {
                        return Err(Error::UnknownTable(t.clone()));
                    }
                }
                self.plan.tables.iter().filter(|t| ts.contains(t)).cloned().collect()
            }
            None => self.plan.tables.clone(),
        };
        let keep = self.relevant_rows();
        let mut columns = Vec::with_capacity(self.columns.len());
        for (i, col) in self.columns.iter().enumerate() {
            let stmt = i.checked_sub(1).map(|s| &self.plan.statements[s]);
            let mut views = BTreeMap::new();
            for t in &tables {
                let Some(rel) = col.get(t) else { continue };
                let role = match stmt {
                    None => TableRole::Initial,
                    Some(s) if s.bound.target_table() == Some(t.as_str()) => TableRole::Target,
                    Some(s) if s.bound.tables_read().contains(t) => TableRole::Input,
                    Some(_) => TableRole::Unchanged,
                };
                let mut rows = Vec::new();
                let mut hidden = 0;
                for r in &rel.rows {
                    let (Some(id), Some(version)) = (r.id, r.version.clone()) else { continue };
                    let shown = opts.show_unaffected || role == TableRole::Input || keep.contains(&(t.clone(), id));
                    if !shown {
                        hidden += 1;
                        continue;
                    }
                    let provenance = if r.affected {
                        self.edges.get(&version).into_iter().flatten().cloned().collect()
                    } else {
                        Vec::new()
                    };
                    rows.push(DebugRow {
                        row_id: id,
                        values: r.values.clone(),
                        version,
                        creator: r.creator,
                        affected: r.affected && role == TableRole::Target,
                        provenance,
                    });
                }
                views.insert(
                    t.clone(),
                    TableView {
                        role,
                        columns: rel.columns.iter().map(|c| c.name.clone()).collect(),
                        rows,
                        hidden,
                    },
                );
            }
            columns.push(DebugColumn {
                stmt_index: stmt.map(|s| s.index),
                sql_text: stmt.map(|s| s.spec.sql_text.clone()),
                binds: stmt.map(|s| s.spec.binds.clone()).unwrap_or_default(),
                reenactment_sql: match stmt {
                    Some(s) => Some(to_sql(&s.output)?),
                    None => None,
                },
                tables: views,
            });
        }
        Ok(DebugView {
            xid: self.plan.xid,
            isolation: self.plan.isolation,
            show_unaffected: opts.show_unaffected,
            tables,
            columns,
        })
    }
}

pub fn debug_view(engine: &Engine, xid: TxnId, opts: &DebugOptions) -> Result<DebugView> {
    annotate(engine, reenact_transaction(engine, xid, None)?)?.debug_view(opts)
}

/// Provenance graph of the version of `table`/`row` after statement `stmt`
/// (default: the last statement) of `xid`.
pub fn provenance_graph(
    engine: &Engine,
    xid: TxnId,
    table: &str,
    row: RowId,
    stmt: Option<u32>,
) -> Result<ProvenanceGraph> {
    let a = annotate(engine, reenact_transaction(engine, xid, None)?)?;
    let root = a.version_of(table, row, stmt)?;
    a.graph(&root)
}

/// Provenance graph of an explicit version reference.
pub fn provenance_graph_of(engine: &Engine, xid: TxnId, root: &VersionRef) -> Result<ProvenanceGraph> {
    annotate(engine, reenact_transaction(engine, xid, None)?)?.graph(root)
}

/// Table name of each provenance slot of `rel`'s output.
pub fn prov_slots(rel: &Rel) -> Vec<String> {
    match rel.op() {
        Op::TableAccess { table, .. } => vec![table.clone()],
        Op::Access { input } => {
            let inner = prov_source_table(input);
            vec![inner.unwrap_or_default()]
        }
        Op::Overlay { .. } | Op::ConstRel { .. } => Vec::new(),
        Op::Select { input, .. } | Op::Project { input, .. } | Op::Materialize { input, .. } => prov_slots(input),
        Op::Join { left, right, kind, .. } => {
            let mut s = prov_slots(left);
            if matches!(kind, JoinKind::Inner | JoinKind::Cross) {
                s.extend(prov_slots(right));
            }
            s
        }
        Op::Union { left, right } => {
            let mut s = prov_slots(left);
            s.extend(prov_slots(right));
            s
        }
    }
}

fn prov_source_table(rel: &Rel) -> Option<String> {
    match rel.op() {
        Op::TableAccess { table, .. } => Some(table.clone()),
        Op::Materialize { table, .. } => Some(table.to_string()),
        Op::ConstRel { origin, .. } => origin.as_ref().map(|o| o.to_string()),
        _ => rel.children().into_iter().find_map(prov_source_table),
    }
}

/// Runs a `PROVENANCE OF ...` request against the latest committed state.
///
/// `PROVENANCE OF (query)` returns the query result with one extra column per
/// base-table access holding the contributing version. `PROVENANCE OF
/// TRANSACTION n` returns one row per derivation edge of `n`.
pub fn provenance_request(engine: &Engine, sql: &str, binds: &BindParams) -> Result<QueryOutput> {
    let stmt = bind(&parse(sql)?, binds)?;
    match analyze(&stmt, engine)? {
        BoundStatement::ProvenanceOfQuery(q) => {
            let at = engine.storage().current_scn();
            let rel = translate_query(&q, &mut |t, as_of| {
                Ok(Rel::table_access(engine.storage().schema(t)?, as_of.unwrap_or(at)))
            })?;
            let out = crate::algebra::evaluate(engine.storage(), &rel, engine.config().mode)?;
            let mut columns: Vec<String> = out.columns.iter().map(|c| c.name.clone()).collect();
            for t in prov_slots(&rel) {
                let base = format!("prov_{t}");
                let mut name = base.clone();
                let mut n = 2;
                while columns.contains(&name) {
                    name = format!("{base}_{n}");
                    n += 1;
                }
                columns.push(name);
            }
            let rows = out
                .rows
                .into_iter()
                .map(|r| {
                    let mut v = r.values;
                    v.extend(r.prov.into_iter().map(|p| match p {
                        Some(p) => Value::Text(p.to_string()),
                        None => Value::Null,
                    }));
                    v
                })
                .collect();
            Ok(QueryOutput { columns, rows })
        }
        BoundStatement::ProvenanceOfTransaction(xid) => {
            let a = annotate(engine, reenact_transaction(engine, xid, None)?)?;
            let mut rows = Vec::new();
            for (v, parents) in &a.edges {
                let node = &a.nodes[v];
                for p in parents {
                    rows.push(vec![
                        Value::Text(v.to_string()),
                        Value::Text(node.table.clone()),
                        Value::Int(node.row_id.0 as i64),
                        node.stmt_index.map_or(Value::Null, |s| Value::Int(s as i64)),
                        Value::Text(p.to_string()),
                    ]);
                }
            }
            Ok(QueryOutput {
                columns: ["version", "table_name", "row_id", "stmt", "derived_from"]
                    .map(String::from)
                    .to_vec(),
                rows,
            })
        }
        _ => Err(Error::Unsupported("expected PROVENANCE OF ...".into())),
    }
}
