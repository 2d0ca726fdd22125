//! Position-tracking S-expression reader.

use std::fmt;

use serde::{Deserialize, Serialize};

/// A parse failure with a 1-based position into the input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("line {line}, column {column}: {message}{}", snippet_suffix(.snippet))]
pub struct SourceError {
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub snippet: String,
}

fn snippet_suffix(snippet: &str) -> String {
    if snippet.is_empty() {
        String::new()
    } else {
        format!(" (near `{snippet}`)")
    }
}

impl SourceError {
    pub fn new(pos: Pos, message: impl Into<String>, snippet: impl Into<String>) -> Self {
        SourceError {
            line: pos.line,
            column: pos.column,
            message: message.into(),
            snippet: snippet.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pos {
    pub line: usize,
    pub column: usize,
}

impl Pos {
    pub const START: Pos = Pos { line: 1, column: 1 };
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SExprKind {
    Symbol(String),
    List(Vec<SExpr>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SExpr {
    pub kind: SExprKind,
    pub pos: Pos,
    /// Position just past the closing parenthesis (or the symbol).
    pub end: Pos,
}

impl SExpr {
    pub fn symbol(&self) -> Option<&str> {
        match &self.kind {
            SExprKind::Symbol(s) => Some(s),
            SExprKind::List(_) => None,
        }
    }

    pub fn list(&self) -> Option<&[SExpr]> {
        match &self.kind {
            SExprKind::List(items) => Some(items),
            SExprKind::Symbol(_) => None,
        }
    }

    /// The leading symbol of a list, e.g. `and` in `(and ...)`.
    pub fn head(&self) -> Option<&str> {
        self.list().and_then(|l| l.first()).and_then(SExpr::symbol)
    }
}

impl fmt::Display for SExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            SExprKind::Symbol(s) => write!(f, "{s}"),
            SExprKind::List(items) => {
                write!(f, "(")?;
                for (i, it) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "{it}")?;
                }
                write!(f, ")")
            }
        }
    }
}

struct Reader<'a> {
    src: &'a str,
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    pos: Pos,
}

impl<'a> Reader<'a> {
    fn new(src: &'a str) -> Self {
        Reader {
            src,
            chars: src.char_indices().peekable(),
            pos: Pos::START,
        }
    }

    fn bump(&mut self) -> Option<(usize, char)> {
        let next = self.chars.next()?;
        if next.1 == '\n' {
            self.pos.line += 1;
            self.pos.column = 1;
        } else if next.1 != '\r' {
            self.pos.column += 1;
        }
        Some(next)
    }

    fn skip_trivia(&mut self) {
        while let Some(&(_, c)) = self.chars.peek() {
            if c == ';' {
                while let Some(&(_, c)) = self.chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    self.bump();
                }
            } else if c.is_whitespace() {
                self.bump();
            } else {
                break;
            }
        }
    }

    fn snippet_at(&self, offset: usize) -> String {
        self.src[offset..]
            .lines()
            .next()
            .unwrap_or("")
            .chars()
            .take(40)
            .collect()
    }

    fn read(&mut self) -> Result<Option<SExpr>, SourceError> {
        self.skip_trivia();
        let Some(&(offset, c)) = self.chars.peek() else {
            return Ok(None);
        };
        let start = self.pos;
        match c {
            '(' => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    self.skip_trivia();
                    match self.chars.peek() {
                        None => {
                            return Err(SourceError::new(
                                self.pos,
                                format!("unexpected end of input: unbalanced parenthesis opened at {start}"),
                                self.snippet_at(offset),
                            ));
                        }
                        Some(&(_, ')')) => {
                            self.bump();
                            return Ok(Some(SExpr {
                                kind: SExprKind::List(items),
                                pos: start,
                                end: self.pos,
                            }));
                        }
                        Some(_) => {
                            if let Some(e) = self.read()? {
                                items.push(e);
                            }
                        }
                    }
                }
            }
            ')' => Err(SourceError::new(
                start,
                "unexpected closing parenthesis",
                self.snippet_at(offset),
            )),
            _ => {
                let mut sym = String::new();
                while let Some(&(_, c)) = self.chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' {
                        break;
                    }
                    sym.push(c);
                    self.bump();
                }
                Ok(Some(SExpr {
                    kind: SExprKind::Symbol(sym.to_lowercase()),
                    pos: start,
                    end: self.pos,
                }))
            }
        }
    }
}

/// Reads every top-level form in `src`. Symbols are lowercased.
pub fn read_all(src: &str) -> Result<Vec<SExpr>, SourceError> {
    let mut r = Reader::new(src);
    let mut out = Vec::new();
    while let Some(e) = r.read()? {
        out.push(e);
    }
    Ok(out)
}

/// Reads exactly one top-level form.
pub fn read_one(src: &str) -> Result<SExpr, SourceError> {
    let mut forms = read_all(src)?;
    match forms.len() {
        0 => Err(SourceError::new(Pos::START, "empty input", "")),
        1 => Ok(forms.remove(0)),
        _ => {
            let extra = &forms[1];
            Err(SourceError::new(
                extra.pos,
                "unexpected content after the top-level form",
                extra.to_string().chars().take(40).collect::<String>(),
            ))
        }
    }
}

/// Position of the last character of `src` (for end-of-input errors).
pub fn end_pos(src: &str) -> Pos {
    let mut pos = Pos::START;
    for c in src.chars() {
        if c == '\n' {
            pos.line += 1;
            pos.column = 1;
        } else if c != '\r' {
            pos.column += 1;
        }
    }
    pos
}
