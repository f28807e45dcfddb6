//! Hand-written lexer and precedence-climbing parser for the STL text syntax.

use thiserror::Error;

use super::{Cmp, Formula, Interval};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("syntax error at {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("unknown comparator `{op}` at {pos}")]
    UnknownComparator { pos: usize, op: String },
}

impl ParseError {
    pub fn position(&self) -> usize {
        match self {
            ParseError::Syntax { pos, .. } | ParseError::UnknownComparator { pos, .. } => *pos,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Cmp(Cmp),
    Not,
    And,
    Or,
    Implies,
    G,
    F,
    U,
    LParen,
    RParen,
    LBrack,
    RBrack,
    Comma,
}

fn syntax(pos: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        pos,
        message: message.into(),
    }
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let b = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let c = b[i] as char;
        let next = b.get(i + 1).map(|x| *x as char);
        let start = i;
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                i += 1;
                continue;
            }
            '(' => out.push((start, Tok::LParen)),
            ')' => out.push((start, Tok::RParen)),
            '[' => out.push((start, Tok::LBrack)),
            ']' => out.push((start, Tok::RBrack)),
            ',' => out.push((start, Tok::Comma)),
            '!' if next == Some('=') => {
                return Err(ParseError::UnknownComparator { pos: start, op: "!=".into() })
            }
            '!' => out.push((start, Tok::Not)),
            '&' if next == Some('&') => {
                out.push((start, Tok::And));
                i += 1;
            }
            '|' if next == Some('|') => {
                out.push((start, Tok::Or));
                i += 1;
            }
            '-' if next == Some('>') => {
                out.push((start, Tok::Implies));
                i += 1;
            }
            '<' | '>' => {
                let strict = next != Some('=');
                if !strict {
                    i += 1;
                }
                if b.get(i + 1).map(|x| *x as char) == Some('=') || (c == '<' && b.get(i + 1) == Some(&b'>')) {
                    let end = (i + 2).min(b.len());
                    return Err(ParseError::UnknownComparator {
                        pos: start,
                        op: src[start..end].to_string(),
                    });
                }
                let cmp = match (c, strict) {
                    ('<', true) => Cmp::Lt,
                    ('<', false) => Cmp::Le,
                    ('>', true) => Cmp::Gt,
                    _ => Cmp::Ge,
                };
                out.push((start, Tok::Cmp(cmp)));
            }
            '=' => {
                let mut end = i + 1;
                while end < b.len() && matches!(b[end], b'=' | b'<' | b'>') {
                    end += 1;
                }
                return Err(ParseError::UnknownComparator {
                    pos: start,
                    op: src[start..end].to_string(),
                });
            }
            c if c.is_ascii_digit() || c == '.' || (c == '-' && next.is_some_and(|n| n.is_ascii_digit() || n == '.')) => {
                let mut j = i + 1;
                while j < b.len() {
                    let d = b[j] as char;
                    let prev = b[j - 1] as char;
                    if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || ((d == '-' || d == '+') && (prev == 'e' || prev == 'E')) {
                        j += 1;
                    } else {
                        break;
                    }
                }
                let text = &src[i..j];
                let v: f64 = text.parse().map_err(|_| syntax(start, format!("bad number `{text}`")))?;
                out.push((start, Tok::Num(v)));
                i = j;
                continue;
            }
            '-' if src[i + 1..].starts_with("inf") => {
                out.push((start, Tok::Num(f64::NEG_INFINITY)));
                i += 4;
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut j = i + 1;
                while j < b.len() && ((b[j] as char).is_ascii_alphanumeric() || b[j] == b'_' || b[j] == b'.') {
                    j += 1;
                }
                let word = &src[i..j];
                out.push((
                    start,
                    match word {
                        "G" => Tok::G,
                        "F" => Tok::F,
                        "U" => Tok::U,
                        "inf" => Tok::Num(f64::INFINITY),
                        _ => Tok::Ident(word.to_string()),
                    },
                ));
                i = j;
                continue;
            }
            other => return Err(syntax(start, format!("unexpected character `{other}`"))),
        }
        i += 1;
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    k: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.k).map(|t| &t.1)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.k).map(|t| t.0).unwrap_or(self.end)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.k).map(|t| t.1.clone());
        self.k += 1;
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ParseError> {
        let pos = self.pos();
        match self.bump() {
            Some(t) if t == want => Ok(()),
            Some(_) => Err(syntax(pos, format!("expected {what}"))),
            None => Err(syntax(pos, format!("expected {what}, found end of input"))),
        }
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        let pos = self.pos();
        match self.bump() {
            Some(Tok::Num(v)) => Ok(v),
            _ => Err(syntax(pos, "expected a number")),
        }
    }

    fn interval(&mut self) -> Result<Interval, ParseError> {
        let pos = self.pos();
        self.expect(Tok::LBrack, "`[`")?;
        let a = self.number()?;
        self.expect(Tok::Comma, "`,`")?;
        let b = self.number()?;
        self.expect(Tok::RBrack, "`]`")?;
        if !(a >= 0.0 && a.is_finite() && a <= b) {
            return Err(syntax(pos, "interval needs 0 <= a <= b"));
        }
        Ok(Interval::new(a, b))
    }

    fn implies(&mut self) -> Result<Formula, ParseError> {
        let mut l = self.or()?;
        while self.peek() == Some(&Tok::Implies) {
            self.bump();
            let r = self.or()?;
            l = Formula::Implies(Box::new(l), Box::new(r));
        }
        Ok(l)
    }

    fn or(&mut self) -> Result<Formula, ParseError> {
        let mut l = self.and()?;
        while self.peek() == Some(&Tok::Or) {
            self.bump();
            let r = self.and()?;
            l = Formula::Or(Box::new(l), Box::new(r));
        }
        Ok(l)
    }

    fn and(&mut self) -> Result<Formula, ParseError> {
        let mut l = self.until()?;
        while self.peek() == Some(&Tok::And) {
            self.bump();
            let r = self.until()?;
            l = Formula::And(Box::new(l), Box::new(r));
        }
        Ok(l)
    }

    fn until(&mut self) -> Result<Formula, ParseError> {
        let mut l = self.unary()?;
        while self.peek() == Some(&Tok::U) {
            self.bump();
            let i = self.interval()?;
            let r = self.unary()?;
            l = Formula::Until(i, Box::new(l), Box::new(r));
        }
        Ok(l)
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        match self.peek() {
            Some(Tok::Not) => {
                self.bump();
                Ok(Formula::Not(Box::new(self.unary()?)))
            }
            Some(Tok::G) => {
                self.bump();
                let i = self.interval()?;
                Ok(Formula::Globally(i, Box::new(self.unary()?)))
            }
            Some(Tok::F) => {
                self.bump();
                let i = self.interval()?;
                Ok(Formula::Eventually(i, Box::new(self.unary()?)))
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Formula, ParseError> {
        let pos = self.pos();
        match self.bump() {
            Some(Tok::LParen) => {
                let f = self.implies()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(f)
            }
            Some(Tok::Ident(name)) => {
                let cpos = self.pos();
                let cmp = match self.bump() {
                    Some(Tok::Cmp(c)) => c,
                    _ => return Err(syntax(cpos, "expected a comparator")),
                };
                let c = self.number()?;
                Ok(Formula::Atom { signal: name, cmp, c })
            }
            Some(_) => Err(syntax(pos, "expected a formula")),
            None => Err(syntax(pos, "unexpected end of input")),
        }
    }
}

pub fn parse_stl(text: &str) -> Result<Formula, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        k: 0,
        end: text.len(),
    };
    let f = p.implies()?;
    if p.k < p.toks.len() {
        return Err(syntax(p.pos(), "unexpected trailing input"));
    }
    Ok(f)
}

/// Parse a requirement file: one `NAME: formula` per line; blank lines and
/// lines starting with `#` are skipped. Errors carry the 1-based line number.
pub fn parse_requirements(text: &str) -> Result<Vec<(String, Formula)>, (usize, ParseError)> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, body) = line
            .split_once(':')
            .ok_or((n + 1, syntax(0, "expected `NAME: formula`")))?;
        let f = parse_stl(body.trim()).map_err(|e| (n + 1, e))?;
        out.push((name.trim().to_string(), f));
    }
    Ok(out)
}
