//! Config text syntax: JSON plus a few conveniences.
//!
//! ```text
//! # comment            // also a comment
//! seed = 42
//! neuron = { ib = 5u, vdd = 1 }
//! "sar": {"vref_in": 0.65,}
//! network.fidelity = circuit_ideal
//! ```
//!
//! Keys may be bare or quoted and take `=` or `:`. Members are separated by
//! commas or newlines, and trailing commas are fine. Numbers accept
//! engineering suffixes. A bare word that is not a number or literal is a
//! string. The top level may omit its braces. Dotted keys create nested
//! objects.

use std::fmt::Write as _;

use crate::units::parse_quantity;

use super::ConfigError;

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Null,
    Bool(bool),
    Num(f64),
    Str(String),
    Arr(Vec<Spanned>),
    Obj(Vec<(String, Spanned)>),
}

/// A value and the position where it starts (1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct Spanned {
    pub node: Node,
    pub line: usize,
    pub col: usize,
}

impl Spanned {
    pub fn empty_object() -> Self {
        Spanned {
            node: Node::Obj(Vec::new()),
            line: 1,
            col: 1,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self.node {
            Node::Null => "null",
            Node::Bool(_) => "boolean",
            Node::Num(_) => "number",
            Node::Str(_) => "string",
            Node::Arr(_) => "array",
            Node::Obj(_) => "object",
        }
    }
}

struct Parser<'a> {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    col: usize,
    _text: &'a str,
}

pub fn parse(text: &str) -> Result<Spanned, ConfigError> {
    let mut p = Parser {
        chars: text.chars().collect(),
        pos: 0,
        line: 1,
        col: 1,
        _text: text,
    };
    p.skip_space(true)?;
    let root = if p.peek() == Some('{') {
        let v = p.value()?;
        p.skip_space(true)?;
        if p.peek().is_some() {
            return Err(p.err("trailing content after the top-level object"));
        }
        v
    } else {
        let (line, col) = (p.line, p.col);
        let members = p.members(None)?;
        Spanned {
            node: Node::Obj(members),
            line,
            col,
        }
    };
    if !matches!(root.node, Node::Obj(_)) {
        return Err(ConfigError::Syntax {
            line: root.line,
            col: root.col,
            msg: "top level must be an object".into(),
        });
    }
    Ok(root)
}

fn is_word_char(c: char) -> bool {
    !(c.is_whitespace() || matches!(c, ',' | '{' | '}' | '[' | ']' | ':' | '=' | '"' | '#'))
}

impl Parser<'_> {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, k: usize) -> Option<char> {
        self.chars.get(self.pos + k).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn err(&self, msg: impl Into<String>) -> ConfigError {
        ConfigError::Syntax {
            line: self.line,
            col: self.col,
            msg: msg.into(),
        }
    }

    fn at_comment(&self) -> bool {
        self.peek() == Some('#') || (self.peek() == Some('/') && self.peek_at(1) == Some('/'))
    }

    /// Skips blanks and comments; newlines too when `newlines` is set.
    /// Returns whether a newline was crossed.
    fn skip_space(&mut self, newlines: bool) -> Result<bool, ConfigError> {
        let mut crossed = false;
        loop {
            match self.peek() {
                Some('\n') if newlines => {
                    crossed = true;
                    self.bump();
                }
                Some(c) if c.is_whitespace() && c != '\n' => {
                    self.bump();
                }
                Some(_) if self.at_comment() => {
                    while !matches!(self.peek(), None | Some('\n')) {
                        self.bump();
                    }
                }
                _ => return Ok(crossed),
            }
        }
    }

    /// Object members up to `close` (or end of input at top level).
    fn members(&mut self, close: Option<char>) -> Result<Vec<(String, Spanned)>, ConfigError> {
        let mut out: Vec<(String, Spanned)> = Vec::new();
        loop {
            self.skip_space(true)?;
            match (self.peek(), close) {
                (None, None) => return Ok(out),
                (None, Some(c)) => {
                    return Err(self.err(format!("unexpected end of input, expected `{c}`")))
                }
                (Some(c), Some(cl)) if c == cl => {
                    self.bump();
                    return Ok(out);
                }
                _ => {}
            }
            let (kline, kcol) = (self.line, self.col);
            let key = self.key()?;
            self.skip_space(false)?;
            match self.peek() {
                Some('=') | Some(':') => {
                    self.bump();
                }
                _ => return Err(self.err(format!("expected `=` or `:` after key `{key}`"))),
            }
            self.skip_space(false)?;
            let value = self.value().map_err(|e| e.under_key(&key))?;
            insert_dotted(&mut out, &key, value, kline, kcol)?;
            self.skip_space(false)?;
            match self.peek() {
                Some(',') => {
                    self.bump();
                }
                Some('\n') => {}
                None if close.is_none() => {}
                Some(c) if Some(c) == close => {}
                Some(c) => return Err(self.err(format!("unexpected `{c}` after value of `{key}`"))),
                None => return Err(self.err("unexpected end of input")),
            }
        }
    }

    fn key(&mut self) -> Result<String, ConfigError> {
        if self.peek() == Some('"') {
            return self.string();
        }
        let mut k = String::new();
        while let Some(c) = self.peek() {
            if c.is_alphanumeric() || matches!(c, '_' | '-' | '.') {
                k.push(c);
                self.bump();
            } else {
                break;
            }
        }
        if k.is_empty() {
            return Err(self.err(match self.peek() {
                Some(c) => format!("expected a key, found `{c}`"),
                None => "expected a key".into(),
            }));
        }
        Ok(k)
    }

    fn string(&mut self) -> Result<String, ConfigError> {
        let (line, col) = (self.line, self.col);
        self.bump();
        let mut s = String::new();
        loop {
            match self.bump() {
                None | Some('\n') => {
                    return Err(ConfigError::Syntax {
                        line,
                        col,
                        msg: "unterminated string".into(),
                    })
                }
                Some('"') => return Ok(s),
                Some('\\') => match self.bump() {
                    Some('n') => s.push('\n'),
                    Some('t') => s.push('\t'),
                    Some('r') => s.push('\r'),
                    Some('"') => s.push('"'),
                    Some('\\') => s.push('\\'),
                    Some('/') => s.push('/'),
                    Some('u') => {
                        let hex: String = (0..4).filter_map(|_| self.bump()).collect();
                        let c = u32::from_str_radix(&hex, 16)
                            .ok()
                            .and_then(char::from_u32)
                            .ok_or_else(|| self.err(format!("bad unicode escape `\\u{hex}`")))?;
                        s.push(c);
                    }
                    other => {
                        return Err(self.err(format!("bad escape `\\{}`", other.unwrap_or(' '))))
                    }
                },
                Some(c) => s.push(c),
            }
        }
    }

    fn value(&mut self) -> Result<Spanned, ConfigError> {
        let (line, col) = (self.line, self.col);
        let node = match self.peek() {
            None => return Err(self.err("expected a value")),
            Some('{') => {
                self.bump();
                Node::Obj(self.members(Some('}'))?)
            }
            Some('[') => {
                self.bump();
                Node::Arr(self.array()?)
            }
            Some('"') => Node::Str(self.string()?),
            Some(c) if is_word_char(c) => {
                let word = self.word();
                self.classify(word, line, col)?
            }
            Some(c) => return Err(self.err(format!("unexpected `{c}`"))),
        };
        Ok(Spanned { node, line, col })
    }

    fn array(&mut self) -> Result<Vec<Spanned>, ConfigError> {
        let mut out = Vec::new();
        loop {
            self.skip_space(true)?;
            if self.peek() == Some(']') {
                self.bump();
                return Ok(out);
            }
            out.push(self.value()?);
            let crossed = self.skip_space(true)?;
            match self.peek() {
                Some(',') => {
                    self.bump();
                }
                Some(']') => {}
                Some(_) if crossed => {}
                Some(c) => return Err(self.err(format!("expected `,` or `]`, found `{c}`"))),
                None => return Err(self.err("unexpected end of input, expected `]`")),
            }
        }
    }

    /// A bare token. A number followed on the same line by more words is
    /// kept whole so that `5 potato` reports a unit error, not a syntax one.
    fn word(&mut self) -> String {
        let mut w = String::new();
        while let Some(c) = self.peek() {
            if is_word_char(c) && !self.at_comment() {
                w.push(c);
                self.bump();
            } else {
                break;
            }
        }
        if starts_numeric(&w) {
            loop {
                let save = (self.pos, self.line, self.col);
                let mut gap = String::new();
                while matches!(self.peek(), Some(' ' | '\t')) {
                    gap.push(self.bump().unwrap());
                }
                if gap.is_empty()
                    || !matches!(self.peek(), Some(c) if c.is_alphabetic() || c == 'µ')
                {
                    (self.pos, self.line, self.col) = save;
                    break;
                }
                w.push_str(&gap);
                while let Some(c) = self.peek() {
                    if is_word_char(c) && !self.at_comment() {
                        w.push(c);
                        self.bump();
                    } else {
                        break;
                    }
                }
            }
        }
        w
    }

    fn classify(&self, word: String, line: usize, col: usize) -> Result<Node, ConfigError> {
        Ok(match word.as_str() {
            "true" => Node::Bool(true),
            "false" => Node::Bool(false),
            "null" => Node::Null,
            "inf" | "+inf" => Node::Num(f64::INFINITY),
            w if starts_numeric(w) => match parse_quantity(w) {
                Ok(v) => Node::Num(v),
                Err(e) => {
                    return Err(ConfigError::Unit {
                        path: String::new(),
                        line,
                        col,
                        msg: e.to_string(),
                    })
                }
            },
            _ => Node::Str(word),
        })
    }
}

fn starts_numeric(w: &str) -> bool {
    let mut cs = w.chars();
    match cs.next() {
        Some(c) if c.is_ascii_digit() => true,
        Some('-' | '+' | '.') => cs.next().is_some_and(|c| c.is_ascii_digit() || c == '.'),
        _ => false,
    }
}

fn insert_dotted(
    out: &mut Vec<(String, Spanned)>,
    key: &str,
    value: Spanned,
    line: usize,
    col: usize,
) -> Result<(), ConfigError> {
    let dup = || ConfigError::Syntax {
        line,
        col,
        msg: format!("duplicate key `{key}`"),
    };
    match key.split_once('.') {
        None => {
            if out.iter().any(|(k, _)| k == key) {
                return Err(dup());
            }
            out.push((key.to_string(), value));
        }
        Some((head, rest)) => {
            if head.is_empty() || rest.is_empty() {
                return Err(ConfigError::Syntax {
                    line,
                    col,
                    msg: format!("malformed dotted key `{key}`"),
                });
            }
            let idx = match out.iter().position(|(k, _)| k == head) {
                Some(i) => i,
                None => {
                    out.push((
                        head.to_string(),
                        Spanned {
                            node: Node::Obj(Vec::new()),
                            line,
                            col,
                        },
                    ));
                    out.len() - 1
                }
            };
            match &mut out[idx].1.node {
                Node::Obj(inner) => insert_dotted(inner, rest, value, line, col)?,
                _ => return Err(dup()),
            }
        }
    }
    Ok(())
}

/// Canonical text for a tree; parsing it yields an equal tree.
pub fn emit(root: &Spanned) -> String {
    let mut s = String::new();
    if let Node::Obj(members) = &root.node {
        for (k, v) in members {
            let _ = write!(s, "{} = ", key_text(k));
            emit_value(&mut s, v, 0);
            s.push('\n');
        }
    } else {
        emit_value(&mut s, root, 0);
        s.push('\n');
    }
    s
}

fn key_text(k: &str) -> String {
    if !k.is_empty()
        && k.chars()
            .all(|c| c.is_alphanumeric() || c == '_' || c == '-')
    {
        k.to_string()
    } else {
        serde_json::to_string(k).expect("string encodes")
    }
}

fn emit_value(s: &mut String, v: &Spanned, level: usize) {
    match &v.node {
        Node::Null => s.push_str("null"),
        Node::Bool(b) => s.push_str(if *b { "true" } else { "false" }),
        Node::Num(x) if x.is_infinite() && *x > 0.0 => s.push_str("inf"),
        // `{:e}` round-trips exactly.
        Node::Num(x) => {
            let _ = write!(s, "{x:e}");
        }
        Node::Str(t) => s.push_str(&serde_json::to_string(t).expect("string encodes")),
        Node::Arr(items) => {
            s.push('[');
            for (k, x) in items.iter().enumerate() {
                if k > 0 {
                    s.push_str(", ");
                }
                emit_value(s, x, level + 1);
            }
            s.push(']');
        }
        Node::Obj(members) => {
            s.push_str("{\n");
            for (k, x) in members {
                for _ in 0..=level {
                    s.push_str("  ");
                }
                let _ = write!(s, "{} = ", key_text(k));
                emit_value(s, x, level + 1);
                s.push('\n');
            }
            for _ in 0..level {
                s.push_str("  ");
            }
            s.push('}');
        }
    }
}

/// Structural equality ignoring positions.
pub fn same_tree(a: &Spanned, b: &Spanned) -> bool {
    match (&a.node, &b.node) {
        (Node::Arr(x), Node::Arr(y)) => {
            x.len() == y.len() && x.iter().zip(y).all(|(p, q)| same_tree(p, q))
        }
        (Node::Obj(x), Node::Obj(y)) => {
            x.len() == y.len()
                && x.iter()
                    .zip(y)
                    .all(|((ka, va), (kb, vb))| ka == kb && same_tree(va, vb))
        }
        (p, q) => p == q,
    }
}
