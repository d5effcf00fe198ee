//! Textual rule language.
//!
//! ```text
//! catalog "catalog.json"
//! tick 1000
//!
//! rule flip_to_mute:
//!   when light.level < 5.0
//!   then set ringer = vibrate
//!   else set ringer = normal
//! ```
//!
//! Connective precedence, tightest first: `not`, then `and`/`nand`, then
//! `xor`/`xnor`, then `or`/`nor`. Binary connectives associate to the left.
//! Nested rules appear as actions and are closed with `end`.

mod check;
mod lexer;
mod parser;
mod printer;

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::context::Millis;
use crate::engine::Rule;

pub use check::check;
pub use parser::parse;
pub use printer::{print, print_expr};

/// Keywords that cannot be used as identifiers.
pub const KEYWORDS: &[&str] = &[
    "rule", "when", "then", "else", "end", "not", "and", "or", "xor", "nand", "nor", "xnor", "in",
    "matches", "within", "of", "set", "play", "vibrate", "emit", "call", "nothing", "true",
    "false", "catalog", "tick",
];

/// Byte range in the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
    /// 1-based.
    pub line: usize,
    /// 1-based, in characters.
    pub column: usize,
    pub span: Span,
}

impl Diagnostic {
    /// Builds an error located at `span`, clamped into `src`.
    pub fn error(src: &str, span: Span, message: String) -> Diagnostic {
        let len = src.len();
        let mut start = span.start.min(len);
        // An error at end of input points at the last character.
        if start == len && len > 0 {
            start = src[..len].char_indices().last().map_or(0, |(i, _)| i);
        }
        while !src.is_char_boundary(start) {
            start -= 1;
        }
        let mut end = span.end.clamp(start, len);
        while !src.is_char_boundary(end) {
            end += 1;
        }
        let before = &src[..start];
        let line = before.matches('\n').count() + 1;
        let line_start = before.rfind('\n').map_or(0, |i| i + 1);
        let column = src[line_start..start].chars().count() + 1;
        Diagnostic {
            severity: Severity::Error,
            message,
            line,
            column,
            span: Span { start, end },
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{}:{}: {sev}: {}", self.line, self.column, self.message)
    }
}

/// A parsed `.m3i` file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RuleFile {
    /// Catalog path, relative to the rule file.
    pub catalog: Option<String>,
    pub tick: Option<Millis>,
    pub rules: Vec<Rule>,
}

/// Source positions recorded while parsing, keyed by rule node id.
#[derive(Debug, Clone, Default)]
pub struct SourceMap {
    pub text: String,
    pub rules: BTreeMap<String, Span>,
    /// `(rule id, leaf path)` to the statement's span.
    pub leaves: BTreeMap<(String, String), Span>,
    /// Span of each `call` callback id, keyed by rule id and branch keyword.
    pub calls: BTreeMap<(String, &'static str), Span>,
}

impl SourceMap {
    fn diag(&self, span: Option<Span>, message: String) -> Diagnostic {
        let span = span.unwrap_or(Span { start: 0, end: 0 });
        Diagnostic::error(&self.text, span, message)
    }
}

#[derive(Debug, Clone)]
pub struct Parsed {
    pub file: RuleFile,
    pub map: SourceMap,
}

/// Parses and checks `text`; returns the file only when it is clean.
pub fn parse_and_check(
    text: &str,
    catalog: &crate::context::Catalog,
    callbacks: &[&str],
) -> Result<RuleFile, Vec<Diagnostic>> {
    let parsed = parse(text)?;
    let diags = check(&parsed.file, Some(&parsed.map), catalog, callbacks);
    if diags.is_empty() {
        Ok(parsed.file)
    } else {
        Err(diags)
    }
}
