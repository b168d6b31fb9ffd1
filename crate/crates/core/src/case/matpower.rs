//! Reader for the subset of the MATPOWER `mpc` text format used by case files:
//! `mpc.baseMVA`, `mpc.bus`, `mpc.gen` and `mpc.branch`. Other `mpc.*`
//! assignments (gencost, bus_name, areas, ...) are skipped with a warning.

use super::{ParsedCase, RawCase};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Str,
    Dot,
    Eq,
    Semi,
    Comma,
    Newline,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Minus,
    Plus,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn syntax(line: usize, col: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        column: col,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    for (li, raw_line) in text.lines().enumerate() {
        let line = li + 1;
        let chars: Vec<char> = raw_line.chars().collect();
        let mut continued = false;
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let col = i + 1;
            let push = |out: &mut Vec<Token>, tok| out.push(Token { tok, line, col });
            match c {
                '%' | '#' => break,
                ' ' | '\t' | '\r' => i += 1,
                '.' if chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) => {
                    let (v, len) = lex_number(&chars[i..]).ok_or_else(|| syntax(line, col, "bad number"))?;
                    push(&mut out, Tok::Num(v));
                    i += len;
                }
                '.' if chars.get(i + 1) == Some(&'.') && chars.get(i + 2) == Some(&'.') => {
                    // line continuation: drop the rest of the line and the newline
                    continued = true;
                    break;
                }
                '.' => {
                    push(&mut out, Tok::Dot);
                    i += 1;
                }
                '=' => {
                    push(&mut out, Tok::Eq);
                    i += 1;
                }
                ';' => {
                    push(&mut out, Tok::Semi);
                    i += 1;
                }
                ',' => {
                    push(&mut out, Tok::Comma);
                    i += 1;
                }
                '[' => {
                    push(&mut out, Tok::LBracket);
                    i += 1;
                }
                ']' => {
                    push(&mut out, Tok::RBracket);
                    i += 1;
                }
                '{' => {
                    push(&mut out, Tok::LBrace);
                    i += 1;
                }
                '}' => {
                    push(&mut out, Tok::RBrace);
                    i += 1;
                }
                '-' => {
                    push(&mut out, Tok::Minus);
                    i += 1;
                }
                '+' => {
                    push(&mut out, Tok::Plus);
                    i += 1;
                }
                '\'' | '"' => {
                    let end = chars[i + 1..]
                        .iter()
                        .position(|&d| d == c)
                        .ok_or_else(|| syntax(line, col, "unterminated string"))?;
                    push(&mut out, Tok::Str);
                    i += end + 2;
                }
                d if d.is_ascii_digit() => {
                    let (v, len) = lex_number(&chars[i..]).ok_or_else(|| syntax(line, col, "bad number"))?;
                    push(&mut out, Tok::Num(v));
                    i += len;
                }
                a if a.is_alphabetic() || a == '_' => {
                    let len = chars[i..]
                        .iter()
                        .take_while(|d| d.is_alphanumeric() || **d == '_')
                        .count();
                    let word: String = chars[i..i + len].iter().collect();
                    let tok = match word.as_str() {
                        "Inf" | "inf" => Tok::Num(f64::INFINITY),
                        "NaN" | "nan" => Tok::Num(f64::NAN),
                        _ => Tok::Ident(word),
                    };
                    push(&mut out, tok);
                    i += len;
                }
                other => return Err(syntax(line, col, format!("unexpected character '{other}'"))),
            }
        }
        if !continued {
            out.push(Token {
                tok: Tok::Newline,
                line,
                col: chars.len() + 1,
            });
        }
    }
    Ok(out)
}

fn lex_number(chars: &[char]) -> Option<(f64, usize)> {
    let mut len = 0;
    let mut seen_exp = false;
    while len < chars.len() {
        let c = chars[len];
        let ok = c.is_ascii_digit()
            || c == '.'
            || (!seen_exp && (c == 'e' || c == 'E'))
            || ((c == '-' || c == '+') && len > 0 && matches!(chars[len - 1], 'e' | 'E'));
        if !ok {
            break;
        }
        if c == 'e' || c == 'E' {
            seen_exp = true;
        }
        len += 1;
    }
    let s: String = chars[..len].iter().collect();
    s.parse().ok().map(|v| (v, len))
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

enum Value {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
    Other,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn eof_error(&self) -> Error {
        let (line, col) = self
            .toks
            .last()
            .map(|t| (t.line, t.col))
            .unwrap_or((1, 1));
        syntax(line, col, "unexpected end of input")
    }

    fn expect(&mut self, want: &Tok, what: &str) -> Result<Token> {
        let t = self.next().ok_or_else(|| self.eof_error())?;
        if &t.tok != want {
            return Err(syntax(t.line, t.col, format!("expected {what}")));
        }
        Ok(t)
    }

    fn skip_line(&mut self) {
        while let Some(t) = self.next() {
            if t.tok == Tok::Newline {
                break;
            }
        }
    }

    fn signed_number(&mut self, first: Token) -> Result<f64> {
        match first.tok {
            Tok::Num(v) => Ok(v),
            Tok::Minus | Tok::Plus => {
                let neg = first.tok == Tok::Minus;
                let t = self.next().ok_or_else(|| self.eof_error())?;
                match t.tok {
                    Tok::Num(v) => Ok(if neg { -v } else { v }),
                    _ => Err(syntax(t.line, t.col, "expected number after sign")),
                }
            }
            _ => Err(syntax(first.line, first.col, "expected number")),
        }
    }

    fn value(&mut self) -> Result<Value> {
        let t = self.next().ok_or_else(|| self.eof_error())?;
        match t.tok {
            Tok::LBracket => self.matrix().map(Value::Matrix),
            Tok::LBrace => {
                let mut depth = 1;
                while depth > 0 {
                    let t = self.next().ok_or_else(|| self.eof_error())?;
                    match t.tok {
                        Tok::LBrace => depth += 1,
                        Tok::RBrace => depth -= 1,
                        _ => {}
                    }
                }
                Ok(Value::Other)
            }
            Tok::Str => Ok(Value::Other),
            Tok::Num(_) | Tok::Minus | Tok::Plus => self.signed_number(t).map(Value::Scalar),
            _ => Err(syntax(t.line, t.col, "expected a value")),
        }
    }

    fn matrix(&mut self) -> Result<Vec<Vec<f64>>> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut row: Vec<f64> = Vec::new();
        loop {
            let t = self.next().ok_or_else(|| self.eof_error())?;
            match t.tok {
                Tok::RBracket => {
                    if !row.is_empty() {
                        rows.push(std::mem::take(&mut row));
                    }
                    break;
                }
                Tok::Semi | Tok::Newline => {
                    if !row.is_empty() {
                        rows.push(std::mem::take(&mut row));
                    }
                }
                Tok::Comma => {}
                Tok::Num(_) | Tok::Minus | Tok::Plus => {
                    let (line, col) = (t.line, t.col);
                    let v = self.signed_number(t)?;
                    if v.is_nan() {
                        return Err(syntax(line, col, "NaN is not allowed in case data"));
                    }
                    row.push(v);
                }
                _ => return Err(syntax(t.line, t.col, "expected number in matrix")),
            }
        }
        Ok(rows)
    }
}

/// Parse MATPOWER-style case text into a validated per-unit case.
pub fn parse_case_matpower(text: &str) -> Result<ParsedCase> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let mut raw = RawCase::default();
    let mut have = (false, false, false, false);
    let mut warnings = Vec::new();

    while let Some(t) = p.peek().cloned() {
        match &t.tok {
            Tok::Newline | Tok::Semi => {
                p.pos += 1;
            }
            Tok::Ident(w) if w == "function" || w == "end" || w == "return" => p.skip_line(),
            Tok::Ident(w) if w == "mpc" => {
                p.pos += 1;
                p.expect(&Tok::Dot, "'.' after mpc")?;
                let name_tok = p.next().ok_or_else(|| p.eof_error())?;
                let Tok::Ident(name) = name_tok.tok else {
                    return Err(syntax(name_tok.line, name_tok.col, "expected field name"));
                };
                p.expect(&Tok::Eq, "'='")?;
                let value = p.value()?;
                let bad = |what: &str| syntax(name_tok.line, name_tok.col, format!("mpc.{name} must be {what}"));
                match (name.as_str(), value) {
                    ("baseMVA", Value::Scalar(v)) => {
                        raw.base_mva = v;
                        have.0 = true;
                    }
                    ("baseMVA", _) => return Err(bad("a number")),
                    ("bus", Value::Matrix(m)) => {
                        raw.bus = m;
                        have.1 = true;
                    }
                    ("gen", Value::Matrix(m)) => {
                        raw.gen = m;
                        have.2 = true;
                    }
                    ("branch", Value::Matrix(m)) => {
                        raw.branch = m;
                        have.3 = true;
                    }
                    ("bus" | "gen" | "branch", _) => return Err(bad("a matrix")),
                    ("version", _) => {}
                    (other, _) => warnings.push(format!("mpc.{other} ignored")),
                }
            }
            Tok::Ident(w) => {
                return Err(syntax(t.line, t.col, format!("unexpected identifier '{w}'")));
            }
            _ => return Err(syntax(t.line, t.col, "unexpected token")),
        }
    }
    for (ok, field) in [
        (have.0, "baseMVA"),
        (have.1, "bus"),
        (have.2, "gen"),
        (have.3, "branch"),
    ] {
        if !ok {
            return Err(Error::InvalidCase(format!("missing mpc.{field}")));
        }
    }
    let case = raw.into_network(&mut warnings)?;
    Ok(ParsedCase { case, warnings })
}
