use std::fmt;

use thiserror::Error;

use super::sexpr::Pos;

/// Diagnostic category shared by parse errors and validation diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorKind {
    Syntax,
    UnknownPredicate,
    ArityMismatch,
    UnboundVariable,
    UnsupportedRequirement,
    Unsupported,
    UnknownObject,
    UnknownType,
    Duplicate,
    ConflictingEffect,
    DomainMismatch,
}

impl ErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Syntax => "syntax error",
            ErrorKind::UnknownPredicate => "unknown predicate",
            ErrorKind::ArityMismatch => "arity mismatch",
            ErrorKind::UnboundVariable => "unbound variable",
            ErrorKind::UnsupportedRequirement => "unsupported requirement",
            ErrorKind::Unsupported => "unsupported construct",
            ErrorKind::UnknownObject => "unknown object",
            ErrorKind::UnknownType => "unknown type",
            ErrorKind::Duplicate => "duplicate definition",
            ErrorKind::ConflictingEffect => "conflicting effect",
            ErrorKind::DomainMismatch => "domain mismatch",
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A positioned parse failure.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{pos}: {kind}: {message}")]
pub struct ParseError {
    pub pos: Pos,
    pub kind: ErrorKind,
    pub message: String,
}

impl ParseError {
    pub fn new(pos: Pos, kind: ErrorKind, message: impl Into<String>) -> Self {
        Self { pos, kind, message: message.into() }
    }

    /// Renders as `file:line:col: category: message`.
    pub fn render(&self, file: &str) -> String {
        format!("{file}:{self}")
    }
}

/// A structural problem found by [`validate`](super::validate).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// Where in the structure the problem sits, e.g. `instance.goal[2]`.
    pub location: String,
    pub kind: ErrorKind,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.location, self.kind, self.message)
    }
}
