//! Algebra to SQL.
//!
//! Overlays are first lowered to semi/anti joins on row identity, so the
//! generated text runs on any engine that offers `AS OF` and `ROWID`. Nodes
//! reached along more than one path become `WITH` entries, which keeps the
//! output linear in the size of the plan DAG. Annotation-only operators
//! (`Access`, `Materialize`, marks) have no SQL counterpart and are dropped;
//! so are the row ids of constant relations.

use std::collections::{HashMap, HashSet};

use super::{Op, Rel};
use crate::error::{Error, Result};
use crate::expr::{ScalarExpr, Side};
use crate::sql::ast::{self, AsOf, BinOp, Expr, JoinClause, JoinKind, Query, SelectCore, SelectItem, TableRef, TableSource};
use crate::sql::parser::is_plain_identifier;
use crate::value::{CmpOp, Value};

/// Renders `rel` as a single SQL query.
pub fn to_sql(rel: &Rel) -> Result<String> {
    Ok(to_query(rel)?.to_string())
}

pub fn to_query(rel: &Rel) -> Result<Query> {
    let lowered = lower_overlays(rel);
    let mut g = Gen::new(&lowered);
    g.emit_ctes(&lowered)?;
    let names = out_names(&lowered);
    let branches = g.body(&lowered, &names)?;
    Ok(Query {
        ctes: g.ctes,
        branches,
    })
}

/// Replaces every Overlay by an equivalent union of semi/anti joins.
pub fn lower_overlays(rel: &Rel) -> Rel {
    let mut memo = HashMap::new();
    lower(rel, &mut memo)
}

fn lower(rel: &Rel, memo: &mut HashMap<usize, Rel>) -> Rel {
    if let Some(r) = memo.get(&rel.key()) {
        return r.clone();
    }
    let out = match rel.op() {
        Op::Overlay {
            base,
            prior_base,
            running,
            ..
        } => {
            let n = lower(base, memo);
            let o = lower(prior_base, memo);
            let e = lower(running, memo);
            let arity = e.arity();
            let rid = ScalarExpr::cmp(CmpOp::Eq, ScalarExpr::RowId(Side::Left), ScalarExpr::RowId(Side::Right));
            let same = ScalarExpr::conjunction(std::iter::once(rid.clone()).chain(
                (0..arity).map(|i| ScalarExpr::cmp(CmpOp::Eq, ScalarExpr::col(i), ScalarExpr::col(arity + i))),
            ));
            // Rows the transaction changed or inserted.
            let own = Rel::join(e.clone(), o.clone(), JoinKind::LeftAnti, same.clone());
            // Current versions of rows it left untouched.
            let kept = Rel::join(
                n.clone(),
                Rel::join(e.clone(), o.clone(), JoinKind::LeftSemi, same),
                JoinKind::LeftSemi,
                Some(rid.clone()),
            );
            // Rows that appeared since the previous statement.
            let fresh = Rel::join(
                Rel::join(n, o, JoinKind::LeftAnti, Some(rid.clone())),
                e,
                JoinKind::LeftAnti,
                Some(rid),
            );
            let u = Rel::union(own, kept).expect("overlay inputs share arity");
            Rel::union(u, fresh).expect("overlay inputs share arity")
        }
        // Inserted rows get ids SQL cannot state. Their SQL row identity
        // must be NULL rather than that of a source row, or the overlays of
        // later statements would match them against unrelated rows.
        Op::Materialize { input, .. } if carries_rowid(input) => {
            let i = lower(input, memo);
            let one = Rel::const_rel(
                vec![super::Column {
                    name: "one".into(),
                    kind: None,
                }],
                vec![super::ConstRow {
                    id: None,
                    values: vec![Value::Int(1)],
                }],
                None,
            )
            .expect("one-row constant");
            let items = rel
                .columns()
                .iter()
                .enumerate()
                .map(|(j, c)| (c.name.clone(), ScalarExpr::col(j)))
                .collect();
            Rel::project(Rel::join(i, one, JoinKind::Cross, None), items)
        }
        _ => {
            let kids: Vec<Rel> = rel.children().into_iter().map(|c| lower(c, memo)).collect();
            if kids.iter().zip(rel.children()).all(|(a, b)| a.ptr_eq(b)) {
                rel.clone()
            } else {
                rebuild(rel, kids)
            }
        }
    };
    memo.insert(rel.key(), out.clone());
    out
}

/// Whether rows of `rel` keep a source row id when rendered as SQL.
fn carries_rowid(rel: &Rel) -> bool {
    match rel.op() {
        Op::TableAccess { .. } | Op::Overlay { .. } => true,
        Op::ConstRel { .. } | Op::Materialize { .. } => false,
        Op::Join { left, kind, .. } => matches!(kind, JoinKind::LeftSemi | JoinKind::LeftAnti) && carries_rowid(left),
        Op::Union { left, right } => carries_rowid(left) || carries_rowid(right),
        Op::Select { input, .. } | Op::Project { input, .. } | Op::Access { input } => carries_rowid(input),
    }
}

fn rebuild(rel: &Rel, mut kids: Vec<Rel>) -> Rel {
    let mut next = || kids.remove(0);
    let w = rel.prov_width();
    match rel.op() {
        Op::TableAccess { .. } | Op::ConstRel { .. } | Op::Overlay { .. } => rel.clone(),
        Op::Select { pred, .. } => Rel::select(next(), pred.clone()),
        Op::Project { items, mark, .. } => Rel::project_marked(next(), items.clone(), mark.clone()),
        Op::Join { kind, pred, .. } => {
            let l = next();
            Rel::join(l, next(), *kind, pred.clone())
        }
        Op::Union { .. } => {
            let l = next();
            Rel::union(l, next()).expect("rebuilt union keeps arity")
        }
        Op::Materialize {
            table, ids, xid, stmt, ..
        } => Rel::new(
            Op::Materialize {
                input: next(),
                table: table.clone(),
                ids: ids.clone(),
                xid: *xid,
                stmt: *stmt,
            },
            rel.columns().to_vec(),
            w,
        ),
        Op::Access { .. } => Rel::access(next()),
    }
}

/// Skips operators without SQL counterpart.
fn strip(mut r: &Rel) -> &Rel {
    loop {
        match r.op() {
            Op::Access { input } | Op::Materialize { input, .. } => r = input,
            _ => return r,
        }
    }
}

/// Output column names usable in SQL: valid identifiers, no duplicates.
fn out_names(rel: &Rel) -> Vec<String> {
    let mut seen = HashSet::new();
    rel.columns()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let base = if is_plain_identifier(&c.name) {
                c.name.clone()
            } else {
                format!("c{}", i + 1)
            };
            let mut name = base.clone();
            let mut n = 2;
            while !seen.insert(name.clone()) {
                name = format!("{base}_{n}");
                n += 1;
            }
            name
        })
        .collect()
}

struct Gen {
    refs: HashMap<usize, usize>,
    cte_names: HashMap<usize, String>,
    ctes: Vec<(String, Query)>,
    taken: HashSet<String>,
    next_cte: usize,
    next_alias: usize,
}

/// A FROM clause under construction with the SQL expression for each visible
/// column and for the carrier row id.
struct FromBuild {
    from: Option<ast::From>,
    filter: Option<Expr>,
    cols: Vec<Expr>,
    carrier: Expr,
}

impl Gen {
    fn new(root: &Rel) -> Gen {
        let mut refs: HashMap<usize, usize> = HashMap::new();
        let mut taken = HashSet::new();
        let mut seen = HashSet::new();
        let mut stack = vec![strip(root).clone()];
        while let Some(r) = stack.pop() {
            if !seen.insert(r.key()) {
                continue;
            }
            if let Op::TableAccess { table, .. } = r.op() {
                taken.insert(table.clone());
            }
            for c in r.children() {
                let c = strip(c);
                *refs.entry(c.key()).or_default() += 1;
                stack.push(c.clone());
            }
        }
        Gen {
            refs,
            cte_names: HashMap::new(),
            ctes: Vec::new(),
            taken,
            next_cte: 0,
            next_alias: 0,
        }
    }

    fn shareable(r: &Rel) -> bool {
        match r.op() {
            Op::TableAccess { .. } => false,
            Op::ConstRel { .. } => r.arity() > 0,
            _ => true,
        }
    }

    fn is_shared(&self, r: &Rel) -> bool {
        self.cte_names.contains_key(&r.key())
    }

    fn fresh(&mut self, prefix: &str, counter: fn(&mut Gen) -> &mut usize) -> String {
        loop {
            let c = counter(self);
            *c += 1;
            let name = format!("{prefix}{}", *c);
            if !self.taken.contains(&name) {
                return name;
            }
        }
    }

    /// Emits one WITH entry per shared node, dependencies first.
    fn emit_ctes(&mut self, root: &Rel) -> Result<()> {
        let mut done = HashSet::new();
        // Iterative post-order to stay clear of deep recursion on long chains.
        let mut stack: Vec<(Rel, bool)> = vec![(strip(root).clone(), false)];
        while let Some((r, expanded)) = stack.pop() {
            if expanded {
                let shared = self.refs.get(&r.key()).copied().unwrap_or(0) >= 2;
                if shared && Gen::shareable(&r) {
                    let names = out_names(&r);
                    let branches = self.body(&r, &names)?;
                    let name = self.fresh("w", |g| &mut g.next_cte);
                    self.ctes.push((
                        name.clone(),
                        Query {
                            ctes: Vec::new(),
                            branches,
                        },
                    ));
                    self.cte_names.insert(r.key(), name);
                }
                continue;
            }
            if !done.insert(r.key()) {
                continue;
            }
            stack.push((r.clone(), true));
            for c in r.children().into_iter().rev() {
                let c = strip(c);
                if !done.contains(&c.key()) {
                    stack.push((c.clone(), false));
                }
            }
        }
        Ok(())
    }

    /// The node's own definition as UNION ALL branches.
    fn body(&mut self, rel: &Rel, names: &[String]) -> Result<Vec<SelectCore>> {
        let rel = strip(rel);
        match rel.op() {
            Op::Union { left, right } => {
                let mut out = self.branch(left, names)?;
                out.extend(self.branch(right, names)?);
                Ok(out)
            }
            Op::ConstRel { rows, .. } => {
                if rel.arity() == 0 {
                    return Err(Error::Unsupported("constant relation without columns".into()));
                }
                if rows.is_empty() {
                    return Ok(vec![SelectCore {
                        items: names
                            .iter()
                            .map(|n| SelectItem::Expr {
                                expr: Expr::Literal(Value::Null),
                                alias: Some(n.clone()),
                            })
                            .collect(),
                        from: None,
                        filter: Some(false_expr()),
                    }]);
                }
                Ok(rows
                    .iter()
                    .map(|r| SelectCore {
                        items: r
                            .values
                            .iter()
                            .zip(names)
                            .map(|(v, n)| SelectItem::Expr {
                                expr: Expr::Literal(v.clone()),
                                alias: Some(n.clone()),
                            })
                            .collect(),
                        from: None,
                        filter: None,
                    })
                    .collect())
            }
            _ => Ok(vec![self.core(rel, names)?]),
        }
    }

    fn branch(&mut self, rel: &Rel, names: &[String]) -> Result<Vec<SelectCore>> {
        let rel = strip(rel);
        if self.is_shared(rel) {
            let fb = self.from_build(rel)?;
            return Ok(vec![items_core(fb, names, None)]);
        }
        self.body(rel, names)
    }

    fn core(&mut self, rel: &Rel, names: &[String]) -> Result<SelectCore> {
        match rel.op() {
            Op::Project { input, items, .. } => {
                let fb = self.from_build(input)?;
                let exprs = items
                    .iter()
                    .map(|(_, e)| render(e, &fb.cols, [&fb.carrier, &null()]))
                    .collect::<Result<Vec<_>>>()?;
                Ok(items_core(fb, names, Some(exprs)))
            }
            _ => {
                let fb = self.from_build(rel)?;
                Ok(items_core(fb, names, None))
            }
        }
    }

    fn from_build(&mut self, rel: &Rel) -> Result<FromBuild> {
        let rel = strip(rel);
        if !self.is_shared(rel) {
            match rel.op() {
                Op::Select { input, pred } => {
                    let mut fb = self.from_build(input)?;
                    let p = render(pred, &fb.cols, [&fb.carrier, &null()])?;
                    fb.filter = Some(match fb.filter.take() {
                        Some(f) => Expr::and(f, p),
                        None => p,
                    });
                    return Ok(fb);
                }
                Op::ConstRel { rows, .. } if rel.arity() == 0 => {
                    return match rows.len() {
                        0 => Ok(FromBuild {
                            from: None,
                            filter: Some(false_expr()),
                            cols: Vec::new(),
                            carrier: null(),
                        }),
                        1 => Ok(FromBuild {
                            from: None,
                            filter: None,
                            cols: Vec::new(),
                            carrier: null(),
                        }),
                        _ => Err(Error::Unsupported("constant relation without columns".into())),
                    };
                }
                _ => {}
            }
        }
        // Flatten the left-deep join spine.
        let mut spine = Vec::new();
        let mut node = rel;
        while !self.is_shared(node) {
            match node.op() {
                Op::Join {
                    left,
                    right,
                    kind,
                    pred,
                } => {
                    spine.push((*kind, right.clone(), pred.clone()));
                    node = strip(left);
                }
                _ => break,
            }
        }
        spine.reverse();
        let base = node.clone();
        if spine.is_empty() {
            let (tref, names) = self.source(&base, None)?;
            return Ok(FromBuild {
                from: Some(ast::From {
                    first: tref,
                    joins: Vec::new(),
                }),
                filter: None,
                cols: names.iter().map(|n| Expr::col(n)).collect(),
                carrier: Expr::RowId { qualifier: None },
            });
        }
        let a0 = self.fresh("q", |g| &mut g.next_alias);
        let (first, base_names) = self.source(&base, Some(a0.clone()))?;
        let mut cols: Vec<Expr> = base_names.iter().map(|n| Expr::qcol(&a0, n)).collect();
        let mut carrier = Expr::RowId { qualifier: Some(a0) };
        let mut joins = Vec::new();
        for (kind, right, pred) in spine {
            let right = strip(&right).clone();
            let alias = self.fresh("q", |g| &mut g.next_alias);
            let (item, rnames) = self.source(&right, Some(alias.clone()))?;
            let rcols: Vec<Expr> = rnames.iter().map(|n| Expr::qcol(&alias, n)).collect();
            let mut scope = cols.clone();
            scope.extend(rcols.iter().cloned());
            let rid = Expr::RowId {
                qualifier: Some(alias),
            };
            let on = pred.as_ref().map(|p| render(p, &scope, [&carrier, &rid])).transpose()?;
            let kind = match (kind, &on) {
                (JoinKind::Cross, Some(_)) => JoinKind::Inner,
                (JoinKind::Inner, None) => JoinKind::Cross,
                (JoinKind::LeftSemi | JoinKind::LeftAnti, None) => {
                    // Semi/anti joins need an ON clause; an always-true one.
                    joins.push(JoinClause {
                        kind,
                        item,
                        on: Some(true_expr()),
                    });
                    continue;
                }
                (k, _) => k,
            };
            if matches!(kind, JoinKind::Inner | JoinKind::Cross) {
                cols = scope;
                carrier = null();
            }
            joins.push(JoinClause { kind, item, on });
        }
        Ok(FromBuild {
            from: Some(ast::From { first, joins }),
            filter: None,
            cols,
            carrier,
        })
    }

    /// A FROM item for `rel` and the column names it exposes.
    fn source(&mut self, rel: &Rel, alias: Option<String>) -> Result<(TableRef, Vec<String>)> {
        let names = out_names(rel);
        if let Some(name) = self.cte_names.get(&rel.key()) {
            return Ok((
                TableRef {
                    source: TableSource::Named {
                        name: name.clone(),
                        as_of: None,
                    },
                    alias,
                },
                names,
            ));
        }
        if let Op::TableAccess { table, as_of } = rel.op() {
            return Ok((
                TableRef {
                    source: TableSource::Named {
                        name: table.clone(),
                        as_of: Some(AsOf::Scn(as_of.0)),
                    },
                    alias,
                },
                rel.columns().iter().map(|c| c.name.clone()).collect(),
            ));
        }
        let branches = self.body(rel, &names)?;
        let alias = match alias {
            Some(a) => a,
            None => self.fresh("q", |g| &mut g.next_alias),
        };
        Ok((
            TableRef {
                source: TableSource::Derived(Box::new(Query {
                    ctes: Vec::new(),
                    branches,
                })),
                alias: Some(alias),
            },
            names,
        ))
    }
}

fn items_core(fb: FromBuild, names: &[String], exprs: Option<Vec<Expr>>) -> SelectCore {
    let exprs = exprs.unwrap_or_else(|| fb.cols.clone());
    let items = exprs
        .into_iter()
        .zip(names)
        .map(|(expr, n)| {
            let same = matches!(&expr, Expr::Column { name, .. } if name == n);
            SelectItem::Expr {
                expr,
                alias: (!same).then(|| n.clone()),
            }
        })
        .collect();
    SelectCore {
        items,
        from: fb.from,
        filter: fb.filter,
    }
}

fn null() -> Expr {
    Expr::Literal(Value::Null)
}

fn false_expr() -> Expr {
    Expr::bin(BinOp::Cmp(CmpOp::Eq), Expr::Literal(Value::Int(1)), Expr::Literal(Value::Int(0)))
}

fn true_expr() -> Expr {
    Expr::bin(BinOp::Cmp(CmpOp::Eq), Expr::Literal(Value::Int(1)), Expr::Literal(Value::Int(1)))
}

fn render(e: &ScalarExpr, cols: &[Expr], ids: [&Expr; 2]) -> Result<Expr> {
    let r = |x: &ScalarExpr| render(x, cols, ids).map(Box::new);
    Ok(match e {
        ScalarExpr::Column(i) => cols
            .get(*i)
            .cloned()
            .ok_or_else(|| Error::UnknownColumn(format!("#{i}")))?,
        ScalarExpr::RowId(side) => ids[*side as usize].clone(),
        ScalarExpr::Literal(v) => Expr::Literal(v.clone()),
        ScalarExpr::Arith(op, a, b) => Expr::Binary {
            op: BinOp::Arith(*op),
            left: r(a)?,
            right: r(b)?,
        },
        ScalarExpr::Cmp(op, a, b) => Expr::Binary {
            op: BinOp::Cmp(*op),
            left: r(a)?,
            right: r(b)?,
        },
        ScalarExpr::And(a, b) => Expr::Binary {
            op: BinOp::And,
            left: r(a)?,
            right: r(b)?,
        },
        ScalarExpr::Or(a, b) => Expr::Binary {
            op: BinOp::Or,
            left: r(a)?,
            right: r(b)?,
        },
        ScalarExpr::Not(a) => Expr::Not(r(a)?),
        ScalarExpr::Neg(a) => Expr::Neg(r(a)?),
        ScalarExpr::Case { whens, otherwise } => Expr::Case {
            whens: whens
                .iter()
                .map(|(c, v)| Ok((render(c, cols, ids)?, render(v, cols, ids)?)))
                .collect::<Result<_>>()?,
            otherwise: otherwise.as_deref().map(r).transpose()?,
        },
        ScalarExpr::Cast(a, k) => Expr::Cast { expr: r(a)?, kind: *k },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{evaluate, Mark};
    use crate::par::ExecMode;
    use crate::sql::analyze::{analyze_query, Catalog};
    use crate::sql::parse_query;
    use crate::storage::{Schema, Scn, Storage, TxnId};
    use crate::value::{ArithOp, ValueKind};

    struct Cat<'a>(&'a Storage);

    impl Catalog for Cat<'_> {
        fn table_schema(&self, name: &str) -> Result<Schema> {
            self.0.schema(name).cloned()
        }
        fn resolve_timestamp(&self, ts: &str) -> Result<Scn> {
            Err(Error::Unsupported(ts.into()))
        }
    }

    fn account() -> Storage {
        let mut s = Storage::new();
        s.create_table(
            Schema::new(
                "account",
                &[("cust", ValueKind::Text), ("typ", ValueKind::Text), ("bal", ValueKind::Decimal)],
            ),
            vec![
                vec![Value::text("Alice"), Value::text("Checking"), Value::dec(50)],
                vec![Value::text("Alice"), Value::text("Savings"), Value::dec(30)],
            ],
        )
        .unwrap();
        s
    }

    fn roundtrip(s: &Storage, rel: &Rel) -> (crate::algebra::Relation, crate::algebra::Relation) {
        let sql = to_sql(rel).unwrap();
        let q = parse_query(&sql).unwrap_or_else(|e| panic!("{e}\n{sql}"));
        let bound = analyze_query(&q, &Cat(s)).unwrap_or_else(|e| panic!("{e}\n{sql}"));
        let back = super::super::translate::translate_query(&bound, &mut |t, a| {
            Ok(Rel::table_access(s.schema(t)?, a.unwrap()))
        })
        .unwrap();
        (
            evaluate(s, rel, ExecMode::Sequential).unwrap(),
            evaluate(s, &back, ExecMode::Sequential).unwrap(),
        )
    }

    fn update_plan(s: &Storage) -> Rel {
        let t = Rel::access(Rel::table_access(s.schema("account").unwrap(), Scn(0)));
        let pred = ScalarExpr::and(
            ScalarExpr::cmp(CmpOp::Eq, ScalarExpr::col(0), ScalarExpr::lit("Alice")),
            ScalarExpr::cmp(CmpOp::Eq, ScalarExpr::col(1), ScalarExpr::lit("Checking")),
        );
        let case = ScalarExpr::Case {
            whens: vec![(
                pred.clone(),
                ScalarExpr::arith(ArithOp::Sub, ScalarExpr::col(2), ScalarExpr::lit(70)),
            )],
            otherwise: Some(Box::new(ScalarExpr::col(2))),
        };
        Rel::project_marked(
            t,
            vec![
                ("cust".into(), ScalarExpr::col(0)),
                ("typ".into(), ScalarExpr::col(1)),
                ("bal".into(), case),
            ],
            Some(Mark {
                pred: Some(pred),
                xid: TxnId(1),
                stmt: 0,
                table: "account".into(),
            }),
        )
    }

    #[test]
    fn update_renders_as_case_projection() {
        let s = account();
        assert_eq!(
            to_sql(&update_plan(&s)).unwrap(),
            "SELECT cust, typ, CASE WHEN cust = 'Alice' AND typ = 'Checking' THEN bal - 70 ELSE bal END AS bal \
             FROM account AS OF SCN 0"
        );
    }

    #[test]
    fn overlay_lowering_roundtrips_with_ctes() {
        let s = account();
        let base = Rel::table_access(s.schema("account").unwrap(), Scn(0));
        let mut running = update_plan(&s);
        for _ in 0..6 {
            let rv = Rel::access(Rel::overlay(base.clone(), base.clone(), running, TxnId(1)).unwrap());
            running = Rel::select(
                rv,
                ScalarExpr::cmp(CmpOp::GtEq, ScalarExpr::col(2), ScalarExpr::lit(-100)),
            );
        }
        let sql = to_sql(&running).unwrap();
        assert!(sql.starts_with("WITH w1 AS ("), "{sql}");
        // Linear, not exponential, in the number of statements.
        assert!(sql.len() < 8000, "{}", sql.len());
        let (a, b) = roundtrip(&s, &running);
        assert_eq!(a.data(), b.data());
        assert_eq!(a.rows[0].values[2], Value::dec(-20));
    }

    #[test]
    fn self_join_and_constants_roundtrip() {
        let s = account();
        let t = Rel::table_access(s.schema("account").unwrap(), Scn(0));
        let pred = ScalarExpr::and(
            ScalarExpr::cmp(CmpOp::Eq, ScalarExpr::col(0), ScalarExpr::col(3)),
            ScalarExpr::cmp(CmpOp::NotEq, ScalarExpr::col(1), ScalarExpr::col(4)),
        );
        let j = Rel::join(t.clone(), t.clone(), JoinKind::Cross, Some(pred));
        let p = Rel::project(
            j,
            vec![
                ("cust".into(), ScalarExpr::col(0)),
                ("cust".into(), ScalarExpr::arith(ArithOp::Add, ScalarExpr::col(2), ScalarExpr::col(5))),
            ],
        );
        let c = Rel::const_rel(
            p.columns().to_vec(),
            vec![super::super::ConstRow {
                id: None,
                values: vec![Value::text("Bob"), Value::dec(1)],
            }],
            None,
        )
        .unwrap();
        let u = Rel::union(p, c).unwrap();
        let (a, b) = roundtrip(&s, &u);
        assert_eq!(a.data(), b.data());
        assert_eq!(a.rows.len(), 3);
    }
}
