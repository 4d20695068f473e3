//! Recursive-descent parser for the SQL subset and workload commands.

use crate::error::{Error, Position, Result};
use crate::sql::ast::*;
use crate::sql::lexer::{lex, Tok, Token};
use crate::storage::{ColumnDef, TxnId};
use crate::txn::IsolationLevel;
use crate::value::{ArithOp, CmpOp, Decimal, Value, ValueKind};

const RESERVED: &[&str] = &[
    "select", "from", "where", "as", "of", "join", "inner", "cross", "left", "semi", "anti", "on",
    "union", "all", "and", "or", "not", "case", "when", "then", "else", "end", "cast", "null",
    "update", "set", "insert", "into", "values", "delete", "provenance", "begin", "commit", "abort",
    "rowid", "with",
];

/// Whether `s` can be written as an unquoted, non-reserved identifier.
pub fn is_plain_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_alphabetic() || c == '_')
        && s.chars().all(|c| c.is_alphanumeric() || c == '_')
        && s.chars().all(|c| !c.is_uppercase())
        && !RESERVED.contains(&s)
}

/// A workload or shell command: lifecycle, bootstrap DDL, or a statement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Begin(IsolationLevel),
    Commit,
    Abort,
    /// Session parameter assignments.
    Bind(Vec<(String, Value)>),
    CreateTable {
        name: String,
        columns: Vec<ColumnDef>,
        rows: Vec<Vec<Expr>>,
    },
    Statement(Statement),
}

/// Parses one SQL statement; a trailing semicolon is allowed.
pub fn parse(sql: &str) -> Result<Statement> {
    let mut p = Parser::new(sql)?;
    let stmt = p.statement()?;
    p.finish(false)?;
    Ok(stmt)
}

/// Parses a standalone query.
pub fn parse_query(sql: &str) -> Result<Query> {
    let mut p = Parser::new(sql)?;
    let q = p.query()?;
    p.finish(false)?;
    Ok(q)
}

/// Parses one workload command, which must end with a semicolon.
pub fn parse_command(text: &str) -> Result<Command> {
    let mut p = Parser::new(text)?;
    let cmd = p.command()?;
    p.finish(true)?;
    Ok(cmd)
}

struct Parser {
    toks: Vec<Token>,
    at: usize,
}

impl Parser {
    fn new(src: &str) -> Result<Parser> {
        Ok(Parser { toks: lex(src)?, at: 0 })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.at].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.at + n).min(self.toks.len() - 1)].tok
    }

    fn pos(&self) -> Position {
        self.toks[self.at].pos
    }

    fn advance(&mut self) -> Tok {
        let t = self.toks[self.at].tok.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn error(&self, expected: &[&str]) -> Error {
        Error::Syntax {
            position: self.pos(),
            message: format!(
                "unexpected {}, expected {}",
                self.peek().describe(),
                expected.join(" or ")
            ),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.error(&[&kw.to_uppercase()]))
        }
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: &Tok, what: &str) -> Result<()> {
        if self.eat(t) {
            Ok(())
        } else {
            Err(self.error(&[what]))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String> {
        match self.peek() {
            Tok::Ident(s) if !RESERVED.contains(&s.as_str()) => {
                let s = s.clone();
                self.advance();
                Ok(s)
            }
            _ => Err(self.error(&[what])),
        }
    }

    fn finish(&mut self, require_semicolon: bool) -> Result<()> {
        let had = self.eat(&Tok::Semicolon);
        if require_semicolon && !had {
            return Err(self.error(&["';'"]));
        }
        if *self.peek() != Tok::Eof {
            return Err(self.error(&["end of statement"]));
        }
        Ok(())
    }

    fn command(&mut self) -> Result<Command> {
        if self.eat_kw("begin") {
            let mut iso = IsolationLevel::Snapshot;
            if self.eat_kw("isolation") {
                self.expect_kw("level")?;
                if self.eat_kw("snapshot") || self.eat_kw("serializable") {
                    iso = IsolationLevel::Snapshot;
                } else if self.eat_kw("read") {
                    self.expect_kw("committed")?;
                    iso = IsolationLevel::ReadCommitted;
                } else {
                    return Err(self.error(&["SNAPSHOT", "READ COMMITTED"]));
                }
            }
            return Ok(Command::Begin(iso));
        }
        if self.eat_kw("commit") {
            return Ok(Command::Commit);
        }
        if self.eat_kw("abort") || self.eat_kw("rollback") {
            return Ok(Command::Abort);
        }
        if self.eat_kw("create") {
            return self.create_table();
        }
        if self.eat_kw("bind") {
            return self.bind_list();
        }
        Ok(Command::Statement(self.statement()?))
    }

    fn create_table(&mut self) -> Result<Command> {
        self.expect_kw("table")?;
        let name = self.ident("table name")?;
        self.expect(&Tok::LParen, "'('")?;
        let mut columns = Vec::new();
        loop {
            let col = self.ident("column name")?;
            let kind = self.kind()?;
            columns.push(ColumnDef { name: col, kind });
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(&Tok::RParen, "')'")?;
        let mut rows = Vec::new();
        if self.eat_kw("as") {
            self.expect_kw("values")?;
            rows = self.value_rows()?;
        }
        Ok(Command::CreateTable { name, columns, rows })
    }

    /// `BIND :p = literal, ...` sets session parameters for later statements.
    fn bind_list(&mut self) -> Result<Command> {
        let mut binds = Vec::new();
        loop {
            let name = match self.peek().clone() {
                Tok::Param(p) => {
                    self.advance();
                    p
                }
                _ => return Err(self.error(&["parameter"])),
            };
            self.expect(&Tok::Eq, "'='")?;
            let pos = self.pos();
            match self.expr()? {
                Expr::Literal(v) => binds.push((name, v)),
                _ => {
                    return Err(Error::Syntax {
                        position: pos,
                        message: "bind values must be literals".into(),
                        expected: vec!["literal".into()],
                    })
                }
            }
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        Ok(Command::Bind(binds))
    }

    fn kind(&mut self) -> Result<ValueKind> {
        let k = match self.peek() {
            Tok::Ident(s) => match s.as_str() {
                "int" | "integer" | "bigint" => ValueKind::Int,
                "decimal" | "numeric" => ValueKind::Decimal,
                "text" | "varchar" => ValueKind::Text,
                _ => return Err(self.error(&["INT", "DECIMAL", "TEXT"])),
            },
            _ => return Err(self.error(&["INT", "DECIMAL", "TEXT"])),
        };
        self.advance();
        Ok(k)
    }

    fn statement(&mut self) -> Result<Statement> {
        match self.peek() {
            Tok::Ident(s) => match s.as_str() {
                "select" | "with" => Ok(Statement::Select(self.query()?)),
                "update" => self.update(),
                "insert" => self.insert(),
                "delete" => self.delete(),
                "provenance" => self.provenance(),
                _ => Err(self.error(&["SELECT", "UPDATE", "INSERT", "DELETE", "PROVENANCE"])),
            },
            Tok::LParen => Ok(Statement::Select(self.paren_query()?)),
            _ => Err(self.error(&["SELECT", "UPDATE", "INSERT", "DELETE", "PROVENANCE"])),
        }
    }

    fn update(&mut self) -> Result<Statement> {
        self.expect_kw("update")?;
        let table = self.ident("table name")?;
        self.expect_kw("set")?;
        let mut assignments = Vec::new();
        loop {
            let col = self.ident("column name")?;
            self.expect(&Tok::Eq, "'='")?;
            assignments.push((col, self.expr()?));
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        let filter = if self.eat_kw("where") { Some(self.expr()?) } else { None };
        Ok(Statement::Update(Update {
            table,
            assignments,
            filter,
        }))
    }

    fn insert(&mut self) -> Result<Statement> {
        self.expect_kw("insert")?;
        self.expect_kw("into")?;
        let table = self.ident("table name")?;
        let source = if self.eat_kw("values") {
            InsertSource::Values(self.value_rows()?)
        } else if *self.peek() == Tok::LParen {
            InsertSource::Query(self.paren_query()?)
        } else if self.is_kw("select") || self.is_kw("with") {
            InsertSource::Query(self.query()?)
        } else {
            return Err(self.error(&["VALUES", "SELECT", "'('"]));
        };
        Ok(Statement::Insert(Insert { table, source }))
    }

    fn value_rows(&mut self) -> Result<Vec<Vec<Expr>>> {
        let mut rows = Vec::new();
        loop {
            self.expect(&Tok::LParen, "'('")?;
            let mut row = vec![self.expr()?];
            while self.eat(&Tok::Comma) {
                row.push(self.expr()?);
            }
            self.expect(&Tok::RParen, "')'")?;
            rows.push(row);
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        Ok(rows)
    }

    fn delete(&mut self) -> Result<Statement> {
        self.expect_kw("delete")?;
        self.expect_kw("from")?;
        let table = self.ident("table name")?;
        let filter = if self.eat_kw("where") { Some(self.expr()?) } else { None };
        Ok(Statement::Delete(Delete { table, filter }))
    }

    fn provenance(&mut self) -> Result<Statement> {
        self.expect_kw("provenance")?;
        self.expect_kw("of")?;
        if self.eat_kw("transaction") {
            let Tok::Number(n) = self.peek().clone() else {
                return Err(self.error(&["transaction id"]));
            };
            let id = n.parse::<u64>().map_err(|_| self.error(&["transaction id"]))?;
            self.advance();
            return Ok(Statement::Provenance(ProvenanceRequest::Transaction(TxnId(id))));
        }
        let q = if *self.peek() == Tok::LParen {
            self.paren_query()?
        } else {
            self.query()?
        };
        Ok(Statement::Provenance(ProvenanceRequest::Query(q)))
    }

    fn paren_query(&mut self) -> Result<Query> {
        self.expect(&Tok::LParen, "'('")?;
        let q = self.query()?;
        self.expect(&Tok::RParen, "')'")?;
        Ok(q)
    }

    fn query(&mut self) -> Result<Query> {
        let mut ctes = Vec::new();
        if self.eat_kw("with") {
            loop {
                let name = self.ident("CTE name")?;
                self.expect_kw("as")?;
                ctes.push((name, self.paren_query()?));
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        let mut branches = vec![self.select_core()?];
        while self.is_kw("union") {
            self.advance();
            self.expect_kw("all")?;
            branches.push(self.select_core()?);
        }
        Ok(Query { ctes, branches })
    }

    fn select_core(&mut self) -> Result<SelectCore> {
        self.expect_kw("select")?;
        let mut items = vec![self.select_item()?];
        while self.eat(&Tok::Comma) {
            items.push(self.select_item()?);
        }
        let from = if self.eat_kw("from") { Some(self.from()?) } else { None };
        let filter = if self.eat_kw("where") { Some(self.expr()?) } else { None };
        Ok(SelectCore { items, from, filter })
    }

    fn select_item(&mut self) -> Result<SelectItem> {
        if self.eat(&Tok::Star) {
            return Ok(SelectItem::Wildcard);
        }
        if let (Tok::Ident(q), Tok::Dot, Tok::Star) = (self.peek().clone(), self.peek_at(1), self.peek_at(2)) {
            self.advance();
            self.advance();
            self.advance();
            return Ok(SelectItem::QualifiedWildcard(q));
        }
        if matches!(self.peek(), Tok::Ident(s) if s == "from") {
            return Err(self.error(&["expression", "'*'"]));
        }
        let expr = self.expr()?;
        let alias = self.alias()?;
        Ok(SelectItem::Expr { expr, alias })
    }

    fn alias(&mut self) -> Result<Option<String>> {
        if self.eat_kw("as") {
            return self.ident("alias").map(Some);
        }
        match self.peek() {
            Tok::Ident(s) if !RESERVED.contains(&s.as_str()) => {
                let s = s.clone();
                self.advance();
                Ok(Some(s))
            }
            _ => Ok(None),
        }
    }

    fn from(&mut self) -> Result<From> {
        let first = self.table_ref()?;
        let mut joins = Vec::new();
        loop {
            let kind = if self.eat(&Tok::Comma) {
                JoinKind::Cross
            } else if self.eat_kw("cross") {
                self.expect_kw("join")?;
                JoinKind::Cross
            } else if self.eat_kw("join") {
                JoinKind::Inner
            } else if self.eat_kw("inner") {
                self.expect_kw("join")?;
                JoinKind::Inner
            } else if self.eat_kw("left") {
                let k = if self.eat_kw("semi") {
                    JoinKind::LeftSemi
                } else if self.eat_kw("anti") {
                    JoinKind::LeftAnti
                } else {
                    return Err(self.error(&["SEMI", "ANTI"]));
                };
                self.expect_kw("join")?;
                k
            } else {
                break;
            };
            let item = self.table_ref()?;
            let on = if kind == JoinKind::Cross {
                None
            } else {
                self.expect_kw("on")?;
                Some(self.expr()?)
            };
            joins.push(JoinClause { kind, item, on });
        }
        Ok(From { first, joins })
    }

    fn table_ref(&mut self) -> Result<TableRef> {
        if *self.peek() == Tok::LParen {
            let q = self.paren_query()?;
            let alias = self.alias()?;
            if alias.is_none() {
                return Err(self.error(&["alias for derived table"]));
            }
            return Ok(TableRef {
                source: TableSource::Derived(Box::new(q)),
                alias,
            });
        }
        let name = self.ident("table name")?;
        let mut as_of = None;
        if self.is_kw("as") && matches!(self.peek_at(1), Tok::Ident(s) if s == "of") {
            self.advance();
            self.advance();
            self.eat_kw("scn");
            as_of = Some(match self.advance() {
                Tok::Number(n) => AsOf::Scn(n.parse().map_err(|_| {
                    Error::Syntax {
                        position: self.toks[self.at - 1].pos,
                        message: format!("invalid scn '{n}'"),
                        expected: vec!["integer scn".into()],
                    }
                })?),
                Tok::Str(s) => AsOf::Timestamp(s),
                _ => {
                    self.at -= 1;
                    return Err(self.error(&["scn", "timestamp string"]));
                }
            });
        }
        let alias = self.alias()?;
        Ok(TableRef {
            source: TableSource::Named { name, as_of },
            alias,
        })
    }

    pub fn expr(&mut self) -> Result<Expr> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> Result<Expr> {
        let mut e = self.and_expr()?;
        while self.eat_kw("or") {
            e = Expr::bin(BinOp::Or, e, self.and_expr()?);
        }
        Ok(e)
    }

    fn and_expr(&mut self) -> Result<Expr> {
        let mut e = self.not_expr()?;
        while self.eat_kw("and") {
            e = Expr::bin(BinOp::And, e, self.not_expr()?);
        }
        Ok(e)
    }

    fn not_expr(&mut self) -> Result<Expr> {
        if self.eat_kw("not") {
            return Ok(Expr::Not(Box::new(self.not_expr()?)));
        }
        self.cmp_expr()
    }

    fn cmp_expr(&mut self) -> Result<Expr> {
        let left = self.add_expr()?;
        let op = match self.peek() {
            Tok::Eq => CmpOp::Eq,
            Tok::NotEq => CmpOp::NotEq,
            Tok::Lt => CmpOp::Lt,
            Tok::LtEq => CmpOp::LtEq,
            Tok::Gt => CmpOp::Gt,
            Tok::GtEq => CmpOp::GtEq,
            _ => return Ok(left),
        };
        self.advance();
        let right = self.add_expr()?;
        Ok(Expr::bin(BinOp::Cmp(op), left, right))
    }

    fn add_expr(&mut self) -> Result<Expr> {
        let mut e = self.mul_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => ArithOp::Add,
                Tok::Minus => ArithOp::Sub,
                _ => return Ok(e),
            };
            self.advance();
            e = Expr::bin(BinOp::Arith(op), e, self.mul_expr()?);
        }
    }

    fn mul_expr(&mut self) -> Result<Expr> {
        let mut e = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => ArithOp::Mul,
                Tok::Slash => ArithOp::Div,
                _ => return Ok(e),
            };
            self.advance();
            e = Expr::bin(BinOp::Arith(op), e, self.unary()?);
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(&Tok::Minus) {
            if let Tok::Number(n) = self.peek().clone() {
                let pos = self.pos();
                self.advance();
                return number(&format!("-{n}"), pos).map(Expr::Literal);
            }
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Number(n) => {
                self.advance();
                number(&n, pos).map(Expr::Literal)
            }
            Tok::Str(s) => {
                self.advance();
                Ok(Expr::Literal(Value::Text(s)))
            }
            Tok::Param(p) => {
                self.advance();
                Ok(Expr::Param(p))
            }
            Tok::LParen => {
                self.advance();
                let e = self.expr()?;
                self.expect(&Tok::RParen, "')'")?;
                Ok(e)
            }
            Tok::Ident(s) => match s.as_str() {
                "null" => {
                    self.advance();
                    Ok(Expr::Literal(Value::Null))
                }
                "case" => self.case(),
                "cast" => {
                    self.advance();
                    self.expect(&Tok::LParen, "'('")?;
                    let e = self.expr()?;
                    self.expect_kw("as")?;
                    let kind = self.kind()?;
                    self.expect(&Tok::RParen, "')'")?;
                    Ok(Expr::Cast {
                        expr: Box::new(e),
                        kind,
                    })
                }
                "rowid" => {
                    self.advance();
                    Ok(Expr::RowId { qualifier: None })
                }
                _ if RESERVED.contains(&s.as_str()) => Err(self.error(&["expression"])),
                _ => {
                    self.advance();
                    if self.eat(&Tok::Dot) {
                        if self.eat_kw("rowid") {
                            return Ok(Expr::RowId { qualifier: Some(s) });
                        }
                        let name = self.ident("column name")?;
                        return Ok(Expr::Column {
                            qualifier: Some(s),
                            name,
                        });
                    }
                    Ok(Expr::Column {
                        qualifier: None,
                        name: s,
                    })
                }
            },
            _ => Err(self.error(&["expression"])),
        }
    }

    fn case(&mut self) -> Result<Expr> {
        self.expect_kw("case")?;
        let mut whens = Vec::new();
        while self.eat_kw("when") {
            let c = self.expr()?;
            self.expect_kw("then")?;
            whens.push((c, self.expr()?));
        }
        if whens.is_empty() {
            return Err(self.error(&["WHEN"]));
        }
        let otherwise = if self.eat_kw("else") {
            Some(Box::new(self.expr()?))
        } else {
            None
        };
        self.expect_kw("end")?;
        Ok(Expr::Case { whens, otherwise })
    }
}

fn number(text: &str, pos: Position) -> Result<Value> {
    let bad = |m: String| Error::Syntax {
        position: pos,
        message: m,
        expected: vec!["number".into()],
    };
    if text.contains('.') {
        text.parse::<Decimal>()
            .map(Value::Decimal)
            .map_err(|e| bad(e.to_string()))
    } else {
        text.parse::<i64>()
            .map(Value::Int)
            .map_err(|_| bad(format!("integer literal {text} out of range")))
    }
}
