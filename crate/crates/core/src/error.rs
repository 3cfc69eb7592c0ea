use std::fmt;

use thiserror::Error;

/// Byte range into a source text.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn join(self, other: Span) -> Span {
        Span { start: self.start.min(other.start), end: self.end.max(other.end) }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum Error {
    #[error("parse error at {span}: {message}")]
    Parse { span: Span, message: String },
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("type mismatch in {context}: expected {expected}, found {found}")]
    TypeMismatch { context: String, expected: String, found: String },
    #[error("predicate argument `{0}` is not a flat tuple")]
    PredicateOnNonFlatTuple(String),
    #[error("singleton body depends on the input: {0}")]
    SngStarInputDependent(String),
    #[error("unrestricted singleton has no efficient delta: {0}")]
    UnrestrictedSingleton(String),
    #[error("label {label} has conflicting definitions {left} and {right}")]
    DictUnionConflict { label: String, left: String, right: String },
    #[error("label {0} has no definition")]
    UnboundLabel(String),
    #[error("multiplicity overflow")]
    MultiplicityOverflow,
    #[error("inconsistent update: {0}")]
    InconsistentUpdate(String),
    #[error("cost shapes differ: {0}")]
    ShapeMismatch(String),
    #[error("malformed state: {0}")]
    State(String),
}

impl Error {
    /// Stable machine-readable code for diagnostics.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::UnboundVariable(_) => "unbound-variable",
            Error::UnknownRelation(_) => "unknown-relation",
            Error::TypeMismatch { .. } => "type-mismatch",
            Error::PredicateOnNonFlatTuple(_) => "predicate-non-flat",
            Error::SngStarInputDependent(_) => "sng-input-dependent",
            Error::UnrestrictedSingleton(_) => "unrestricted-singleton",
            Error::DictUnionConflict { .. } => "dict-union-conflict",
            Error::UnboundLabel(_) => "unbound-label",
            Error::MultiplicityOverflow => "multiplicity-overflow",
            Error::InconsistentUpdate(_) => "inconsistent-update",
            Error::ShapeMismatch(_) => "shape-mismatch",
            Error::State(_) => "state",
        }
    }

    pub fn span(&self) -> Option<Span> {
        match self {
            Error::Parse { span, .. } => Some(*span),
            _ => None,
        }
    }

    pub(crate) fn mismatch(context: impl Into<String>, expected: impl fmt::Display, found: impl fmt::Display) -> Self {
        Error::TypeMismatch { context: context.into(), expected: expected.to_string(), found: found.to_string() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
