//! Positioned s-expression reader for PDDL text.

use std::fmt;

use super::error::{ErrorKind, ParseError};

/// 1-based line/column of a token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SExpr {
    /// A bare symbol, lower-cased.
    Symbol(String, Pos),
    List(Vec<SExpr>, Pos),
}

impl SExpr {
    pub fn pos(&self) -> Pos {
        match self {
            SExpr::Symbol(_, p) | SExpr::List(_, p) => *p,
        }
    }

    pub fn as_symbol(&self) -> Option<&str> {
        match self {
            SExpr::Symbol(s, _) => Some(s),
            SExpr::List(..) => None,
        }
    }

    pub fn as_list(&self) -> Option<&[SExpr]> {
        match self {
            SExpr::List(items, _) => Some(items),
            SExpr::Symbol(..) => None,
        }
    }

    /// The head symbol of a list, if it has one.
    pub fn head(&self) -> Option<&str> {
        self.as_list().and_then(|l| l.first()).and_then(SExpr::as_symbol)
    }
}

/// Reads exactly one top-level expression; trailing non-comment text is an error.
pub fn read(text: &str) -> Result<SExpr, ParseError> {
    let mut reader = Reader::new(text);
    reader.skip_trivia();
    let Some(_) = reader.peek() else {
        return Err(ParseError::new(reader.pos(), ErrorKind::Syntax, "empty input"));
    };
    let expr = reader.expr()?;
    reader.skip_trivia();
    if reader.peek().is_some() {
        return Err(ParseError::new(
            reader.pos(),
            ErrorKind::Syntax,
            "unexpected text after the closing parenthesis",
        ));
    }
    Ok(expr)
}

struct Reader<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    col: u32,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        Self { chars: text.chars().peekable(), line: 1, col: 1 }
    }

    fn pos(&self) -> Pos {
        Pos { line: self.line, col: self.col }
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == ';' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn expr(&mut self) -> Result<SExpr, ParseError> {
        self.skip_trivia();
        let start = self.pos();
        match self.peek() {
            None => Err(ParseError::new(start, ErrorKind::Syntax, "unexpected end of input")),
            Some('(') => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    self.skip_trivia();
                    match self.peek() {
                        None => {
                            return Err(ParseError::new(
                                start,
                                ErrorKind::Syntax,
                                "unbalanced parenthesis",
                            ))
                        }
                        Some(')') => {
                            self.bump();
                            return Ok(SExpr::List(items, start));
                        }
                        Some(_) => items.push(self.expr()?),
                    }
                }
            }
            Some(')') => Err(ParseError::new(start, ErrorKind::Syntax, "unexpected ')'")),
            Some(_) => {
                let mut sym = String::new();
                while let Some(c) = self.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' {
                        break;
                    }
                    sym.extend(c.to_lowercase());
                    self.bump();
                }
                Ok(SExpr::Symbol(sym, start))
            }
        }
    }
}
