//! The rule language: rules, cases (native and Prolog-clause syntax),
//! schema/advice/audit statements, and the experience report.
//!
//! Every statement occupies one line. Keywords are case-insensitive;
//! the writer always emits them upper-case.

use std::fmt;

use serde::Serialize;

mod lexer;
mod parse;
mod report;
mod write;

pub use parse::{
    parse_advice, parse_attribute, parse_audit, parse_case, parse_case_checked, parse_prolog_cases,
    parse_rule, parse_rule_in, parse_schema_line, Parsed, SchemaLine, UnknownAttributes,
};
pub use report::format_experience_report;
pub use write::{
    serialize_advice, serialize_attribute, serialize_audit, serialize_case, serialize_rule,
};

/// Location of a diagnostic. Columns are 1-based and `start <= end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SourceSpan {
    pub line: usize,
    pub start: usize,
    pub end: usize,
}

impl SourceSpan {
    pub fn new(line: usize, start: usize, end: usize) -> Self {
        Self {
            line,
            start,
            end: end.max(start),
        }
    }

    /// Same columns, moved to another line.
    pub fn on_line(self, line: usize) -> Self {
        Self { line, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParseDiagnostic {
    pub span: SourceSpan,
    pub message: String,
    pub severity: Severity,
}

impl ParseDiagnostic {
    pub fn error(span: SourceSpan, message: impl Into<String>) -> Self {
        Self {
            span,
            message: message.into(),
            severity: Severity::Error,
        }
    }

    pub fn warning(span: SourceSpan, message: impl Into<String>) -> Self {
        Self {
            span,
            message: message.into(),
            severity: Severity::Warning,
        }
    }
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(
            f,
            "{}:{}: {sev}: {}",
            self.span.line, self.span.start, self.message
        )
    }
}

/// A syntax or well-formedness error. Carries exactly one error diagnostic.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct ParseError(pub ParseDiagnostic);

impl ParseError {
    pub fn diagnostic(&self) -> &ParseDiagnostic {
        &self.0
    }

    /// Moves the error onto `line` (statements are parsed one line at a time).
    pub fn on_line(mut self, line: usize) -> Self {
        self.0.span = self.0.span.on_line(line);
        self
    }
}

/// Whether `s` is a valid attribute name or value: an ASCII letter or
/// underscore followed by letters, digits or underscores.
pub fn is_identifier(s: &str) -> bool {
    lexer::is_ident(s)
}
