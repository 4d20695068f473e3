use crate::error::{Error, Position, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    /// Identifier or keyword, lower-cased.
    Ident(String),
    /// Numeric literal text (`12`, `12.50`).
    Number(String),
    Str(String),
    /// Named parameter including its colon, e.g. `:name`.
    Param(String),
    LParen,
    RParen,
    Comma,
    Dot,
    Star,
    Plus,
    Minus,
    Slash,
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
    Semicolon,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Number(n) => format!("number {n}"),
            Tok::Str(s) => format!("string '{s}'"),
            Tok::Param(p) => format!("parameter {p}"),
            Tok::Eof => "end of input".into(),
            other => format!("'{}'", other.symbol()),
        }
    }

    fn symbol(&self) -> &'static str {
        match self {
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::Comma => ",",
            Tok::Dot => ".",
            Tok::Star => "*",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Slash => "/",
            Tok::Eq => "=",
            Tok::NotEq => "!=",
            Tok::Lt => "<",
            Tok::LtEq => "<=",
            Tok::Gt => ">",
            Tok::GtEq => ">=",
            Tok::Semicolon => ";",
            _ => "",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub pos: Position,
}

fn syntax(pos: Position, message: impl Into<String>) -> Error {
    Error::Syntax {
        position: pos,
        message: message.into(),
        expected: Vec::new(),
    }
}

pub fn lex(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    macro_rules! bump {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        let pos = Position { line, column: col };
        if c.is_whitespace() {
            bump!();
            continue;
        }
        if c == '-' && chars.get(i + 1) == Some(&'-') {
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
            continue;
        }
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            '.' if !chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) => Some(Tok::Dot),
            '*' => Some(Tok::Star),
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '/' => Some(Tok::Slash),
            '=' => Some(Tok::Eq),
            ';' => Some(Tok::Semicolon),
            _ => None,
        };
        if let Some(tok) = single {
            bump!();
            out.push(Token { tok, pos });
            continue;
        }
        match c {
            '!' | '<' | '>' => {
                let next = chars.get(i + 1).copied();
                let (tok, len) = match (c, next) {
                    ('!', Some('=')) => (Tok::NotEq, 2),
                    ('<', Some('>')) => (Tok::NotEq, 2),
                    ('<', Some('=')) => (Tok::LtEq, 2),
                    ('>', Some('=')) => (Tok::GtEq, 2),
                    ('<', _) => (Tok::Lt, 1),
                    ('>', _) => (Tok::Gt, 1),
                    _ => return Err(syntax(pos, "unexpected character '!'")),
                };
                for _ in 0..len {
                    bump!();
                }
                out.push(Token { tok, pos });
            }
            '\'' => {
                bump!();
                let mut s = String::new();
                loop {
                    match chars.get(i) {
                        None => return Err(syntax(pos, "unterminated string literal")),
                        Some('\'') if chars.get(i + 1) == Some(&'\'') => {
                            s.push('\'');
                            bump!();
                            bump!();
                        }
                        Some('\'') => {
                            bump!();
                            break;
                        }
                        Some(&ch) => {
                            s.push(ch);
                            bump!();
                        }
                    }
                }
                out.push(Token { tok: Tok::Str(s), pos });
            }
            ':' if chars.get(i + 1).is_some_and(|d| d.is_alphabetic() || *d == '_') => {
                bump!();
                let mut s = String::from(":");
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    s.push(chars[i].to_ascii_lowercase());
                    bump!();
                }
                out.push(Token { tok: Tok::Param(s), pos });
            }
            d if d.is_ascii_digit() || d == '.' => {
                let mut s = String::new();
                let mut seen_dot = false;
                while i < chars.len() && (chars[i].is_ascii_digit() || (chars[i] == '.' && !seen_dot)) {
                    if chars[i] == '.' {
                        seen_dot = true;
                    }
                    s.push(chars[i]);
                    bump!();
                }
                out.push(Token { tok: Tok::Number(s), pos });
            }
            a if a.is_alphabetic() || a == '_' => {
                let mut s = String::new();
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    s.push(chars[i].to_ascii_lowercase());
                    bump!();
                }
                out.push(Token { tok: Tok::Ident(s), pos });
            }
            other => return Err(syntax(pos, format!("unexpected character '{other}'"))),
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        pos: Position { line, column: col },
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_fig1_update() {
        let toks = lex("UPDATE account SET bal = bal - :amount\nWHERE cust = :name AND typ = :type;").unwrap();
        let kinds: Vec<_> = toks.iter().map(|t| t.tok.clone()).collect();
        assert_eq!(kinds[0], Tok::Ident("update".into()));
        assert!(kinds.contains(&Tok::Param(":amount".into())));
        assert_eq!(toks[8].pos, Position { line: 2, column: 1 });
        assert_eq!(kinds[kinds.len() - 2], Tok::Semicolon);
    }

    #[test]
    fn strings_escape_quotes_and_comments_are_skipped() {
        let toks = lex("'it''s' -- trailing\n 1.50 <> x").unwrap();
        assert_eq!(toks[0].tok, Tok::Str("it's".into()));
        assert_eq!(toks[1].tok, Tok::Number("1.50".into()));
        assert_eq!(toks[2].tok, Tok::NotEq);
        assert!(lex("'open").is_err());
    }
}
