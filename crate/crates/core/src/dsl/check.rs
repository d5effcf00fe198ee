use std::collections::BTreeSet;

use super::{Diagnostic, RuleFile, Severity, SourceMap, Span};
use crate::context::Catalog;
use crate::engine::{Action, DEFAULT_MAX_DEPTH};
use crate::expressions::validate;
use crate::triggers::Trigger;

/// Semantic checks: factor existence and kinds, nesting depth, unique ids
/// and known callbacks. Positions come from `map` when available.
pub fn check(
    file: &RuleFile,
    map: Option<&SourceMap>,
    catalog: &Catalog,
    callbacks: &[&str],
) -> Vec<Diagnostic> {
    let diag = |span: Option<Span>, message: String| match map {
        Some(m) => m.diag(span, message),
        None => Diagnostic {
            severity: Severity::Error,
            message,
            line: 1,
            column: 1,
            span: Span { start: 0, end: 0 },
        },
    };
    let rule_span = |id: &str| map.and_then(|m| m.rules.get(id).copied());
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for top in &file.rules {
        let depth = top.depth();
        if depth > DEFAULT_MAX_DEPTH {
            out.push(diag(
                rule_span(&top.id),
                format!(
                    "rule `{}` nests {depth} levels deep (limit {DEFAULT_MAX_DEPTH})",
                    top.id
                ),
            ));
        }
        for node in top.nodes() {
            if !seen.insert(node.id.as_str()) {
                out.push(diag(
                    rule_span(&node.id),
                    format!("duplicate rule id `{}`", node.id),
                ));
            }
            for issue in validate(&node.when, catalog) {
                let span = map.and_then(|m| {
                    m.leaves
                        .get(&(node.id.clone(), issue.path.clone()))
                        .copied()
                });
                out.push(diag(span, issue.message));
            }
            for (branch, action) in [("then", &node.then), ("else", &node.otherwise)] {
                let Action::Trigger(t) = action else { continue };
                if let Trigger::Call { callback } = t {
                    if !callbacks.contains(&callback.as_str()) {
                        let span =
                            map.and_then(|m| m.calls.get(&(node.id.clone(), branch)).copied());
                        out.push(diag(
                            span,
                            format!(
                                "unknown callback `{callback}` (available: {})",
                                callbacks.join(", ")
                            ),
                        ));
                    }
                }
                if let Err(e) = t.validate() {
                    out.push(diag(rule_span(&node.id), e.to_string()));
                }
            }
        }
    }
    out
}
