//! Diagnostics with a machine-readable code and a source span.

use std::fmt;
use std::path::{Path, PathBuf};

use nrc_core::{Error, Span};
use serde_json::json;

/// A domain error attributed to a source file.
#[derive(Debug)]
pub struct Diag {
    pub code: String,
    pub message: String,
    pub file: Option<PathBuf>,
    pub src: Option<String>,
    pub span: Span,
}

impl Diag {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Diag { code: code.into(), message: message.into(), file: None, src: None, span: Span::default() }
    }

    /// Attributes a core error to `src`, read from `file`. Errors without a
    /// precise span cover the whole input.
    pub fn from_core(e: &Error, file: &Path, src: &str) -> Self {
        let span = e.span().unwrap_or(Span::new(0, src.len()));
        Diag {
            code: e.code().into(),
            message: e.to_string(),
            file: Some(file.to_path_buf()),
            src: Some(src.to_string()),
            span,
        }
    }

    pub fn io(file: &Path, e: std::io::Error) -> Self {
        Diag { file: Some(file.to_path_buf()), ..Diag::new("io", format!("{}: {e}", file.display())) }
    }

    /// One-based line and column of the span start.
    pub fn position(&self) -> (usize, usize) {
        let Some(src) = &self.src else { return (1, 1) };
        let upto = &src[..self.span.start.min(src.len())];
        let line = upto.matches('\n').count() + 1;
        let col = upto.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        (line, col)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let (line, column) = self.position();
        json!({
            "error": {
                "code": self.code,
                "message": self.message,
                "file": self.file.as_ref().map(|f| f.display().to_string()),
                "span": { "start": self.span.start, "end": self.span.end },
                "line": line,
                "column": column,
            }
        })
    }
}

impl fmt::Display for Diag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "error[{}]: {}", self.code, self.message)?;
        let (line, col) = self.position();
        if let Some(file) = &self.file {
            writeln!(f, "  --> {}:{line}:{col} (bytes {})", file.display(), self.span)?;
        }
        if let Some(src) = &self.src {
            if let Some(text) = src.lines().nth(line - 1) {
                let room = text.chars().count().saturating_sub(col - 1).max(1);
                let width = (self.span.end - self.span.start).clamp(1, room);
                writeln!(f, "   | {text}")?;
                writeln!(f, "   | {}{}", " ".repeat(col - 1), "^".repeat(width))?;
            }
        }
        Ok(())
    }
}
