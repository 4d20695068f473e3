//! Substitution of named parameters by literals.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::sql::ast::*;
use crate::value::Value;

/// Parameter name (with leading colon, lower-cased) to value.
pub type BindParams = BTreeMap<String, Value>;

/// Normalizes a user-supplied parameter name to the `:name` form.
pub fn param_key(name: &str) -> String {
    let n = name.trim().to_ascii_lowercase();
    if n.starts_with(':') {
        n
    } else {
        format!(":{n}")
    }
}

pub fn normalize_binds(binds: &BindParams) -> BindParams {
    binds.iter().map(|(k, v)| (param_key(k), v.clone())).collect()
}

/// Replaces every parameter node by its bound literal.
pub fn bind(stmt: &Statement, binds: &BindParams) -> Result<Statement> {
    let binds = normalize_binds(binds);
    let mut out = stmt.clone();
    let mut err = None;
    visit_statement(&mut out, &mut |e| {
        if let Expr::Param(p) = e {
            match binds.get(p) {
                Some(v) => *e = Expr::Literal(v.clone()),
                None => {
                    if err.is_none() {
                        err = Some(Error::UnboundParameter(p.clone()));
                    }
                }
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// Parameter names referenced by a statement, in first-occurrence order.
pub fn parameters(stmt: &Statement) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut s = stmt.clone();
    visit_statement(&mut s, &mut |e| {
        if let Expr::Param(p) = e {
            if !out.contains(p) {
                out.push(p.clone());
            }
        }
    });
    out
}

fn visit_statement(stmt: &mut Statement, f: &mut impl FnMut(&mut Expr)) {
    match stmt {
        Statement::Select(q) | Statement::Provenance(ProvenanceRequest::Query(q)) => visit_query(q, f),
        Statement::Provenance(ProvenanceRequest::Transaction(_)) => {}
        Statement::Update(u) => {
            for (_, e) in &mut u.assignments {
                visit_expr(e, f);
            }
            if let Some(w) = &mut u.filter {
                visit_expr(w, f);
            }
        }
        Statement::Insert(i) => match &mut i.source {
            InsertSource::Values(rows) => rows.iter_mut().flatten().for_each(|e| visit_expr(e, f)),
            InsertSource::Query(q) => visit_query(q, f),
        },
        Statement::Delete(d) => {
            if let Some(w) = &mut d.filter {
                visit_expr(w, f);
            }
        }
    }
}

fn visit_query(q: &mut Query, f: &mut impl FnMut(&mut Expr)) {
    for (_, c) in &mut q.ctes {
        visit_query(c, f);
    }
    for b in &mut q.branches {
        for item in &mut b.items {
            if let SelectItem::Expr { expr, .. } = item {
                visit_expr(expr, f);
            }
        }
        if let Some(from) = &mut b.from {
            visit_table_ref(&mut from.first, f);
            for j in &mut from.joins {
                visit_table_ref(&mut j.item, f);
                if let Some(on) = &mut j.on {
                    visit_expr(on, f);
                }
            }
        }
        if let Some(w) = &mut b.filter {
            visit_expr(w, f);
        }
    }
}

fn visit_table_ref(t: &mut TableRef, f: &mut impl FnMut(&mut Expr)) {
    if let TableSource::Derived(q) = &mut t.source {
        visit_query(q, f);
    }
}

fn visit_expr(e: &mut Expr, f: &mut impl FnMut(&mut Expr)) {
    f(e);
    match e {
        Expr::Binary { left, right, .. } => {
            visit_expr(left, f);
            visit_expr(right, f);
        }
        Expr::Not(x) | Expr::Neg(x) | Expr::Cast { expr: x, .. } => visit_expr(x, f),
        Expr::Case { whens, otherwise } => {
            for (c, v) in whens {
                visit_expr(c, f);
                visit_expr(v, f);
            }
            if let Some(o) = otherwise {
                visit_expr(o, f);
            }
        }
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sql::parse;
    use crate::value::Decimal;

    fn t1_binds() -> BindParams {
        BTreeMap::from([
            ("name".to_string(), Value::text("Alice")),
            (":amount".to_string(), Value::Int(70)),
            (":TYPE".to_string(), Value::text("Checking")),
        ])
    }

    #[test]
    fn binds_fig1_update() {
        let stmt = parse("UPDATE account SET bal = bal - :amount WHERE cust = :name AND typ = :type").unwrap();
        let bound = bind(&stmt, &t1_binds()).unwrap();
        assert!(parameters(&bound).is_empty());
        assert_eq!(
            bound.to_string(),
            "UPDATE account SET bal = bal - 70 WHERE cust = 'Alice' AND typ = 'Checking'"
        );
        assert_eq!(bind(&bound, &t1_binds()).unwrap(), bound);
    }

    #[test]
    fn parameterless_statement_is_unchanged() {
        let stmt = parse("DELETE FROM t WHERE a = 1.50").unwrap();
        assert_eq!(bind(&stmt, &BindParams::new()).unwrap(), stmt);
        let _ = Decimal::from_hundredths(150);
    }

    #[test]
    fn missing_parameter_is_named() {
        let stmt = parse("INSERT INTO overdraft (SELECT a1.cust, a1.bal FROM account a1 WHERE a1.cust = :name)").unwrap();
        let err = bind(&stmt, &BindParams::new()).unwrap_err();
        assert!(err.to_string().contains(":name"), "{err}");
    }
}
