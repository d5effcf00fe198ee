use std::fmt::Write;

use super::RuleFile;
use crate::engine::{Action, Rule};
use crate::expressions::Expr;
use crate::values::{Operator, Value};

/// Canonical text of a rule file. `parse(print(f))` yields `f` again,
/// except that the `enabled` flag is not part of the text.
pub fn print(file: &RuleFile) -> String {
    let mut out = String::new();
    if let Some(c) = &file.catalog {
        writeln!(out, "catalog {}", quote(c)).unwrap();
    }
    if let Some(t) = file.tick {
        writeln!(out, "tick {t}").unwrap();
    }
    for (i, rule) in file.rules.iter().enumerate() {
        if i > 0 || !out.is_empty() {
            out.push('\n');
        }
        print_rule(rule, 0, &mut out);
    }
    out
}

fn print_rule(rule: &Rule, indent: usize, out: &mut String) {
    let pad = " ".repeat(indent + 2);
    writeln!(out, "rule {}:", rule.id).unwrap();
    writeln!(out, "{pad}when {}", print_expr(&rule.when)).unwrap();
    print_action("then", &rule.then, indent, out);
    if rule.otherwise != Action::nothing() {
        print_action("else", &rule.otherwise, indent, out);
    }
}

fn print_action(kw: &str, action: &Action, indent: usize, out: &mut String) {
    let pad = " ".repeat(indent + 2);
    match action {
        Action::Trigger(t) => writeln!(out, "{pad}{kw} {}", t.describe()).unwrap(),
        Action::Rule(r) => {
            write!(out, "{pad}{kw} ").unwrap();
            print_rule(r, indent + 2, out);
            writeln!(out, "{pad}end").unwrap();
        }
    }
}

/// Expression text with the fewest parentheses that keep its shape.
pub fn print_expr(e: &Expr) -> String {
    let mut out = String::new();
    expr(e, &mut out);
    out
}

fn expr(e: &Expr, out: &mut String) {
    match e {
        Expr::Stmt(s) => {
            out.push_str(&s.factor.to_string());
            out.push(' ');
            operator(&s.op, out);
        }
        Expr::Not(c) => {
            out.push_str("not ");
            wrapped(c, matches!(**c, Expr::Binary { .. }), out);
        }
        Expr::Binary { op, left, right } => {
            let prec = |x: &Expr| match x {
                Expr::Binary { op, .. } => Some(op.precedence()),
                _ => None,
            };
            wrapped(left, prec(left).is_some_and(|p| p < op.precedence()), out);
            write!(out, " {} ", op.keyword()).unwrap();
            wrapped(
                right,
                prec(right).is_some_and(|p| p <= op.precedence()),
                out,
            );
        }
    }
}

fn wrapped(e: &Expr, parens: bool, out: &mut String) {
    if parens {
        out.push('(');
        expr(e, out);
        out.push(')');
    } else {
        expr(e, out);
    }
}

fn operator(op: &Operator, out: &mut String) {
    let (sym, v) = match op {
        Operator::Eq(v) => ("==", v),
        Operator::NotEq(v) => ("!=", v),
        Operator::GreaterThan(v) => (">", v),
        Operator::GreaterEq(v) => (">=", v),
        Operator::SmallerThan(v) => ("<", v),
        Operator::SmallerEq(v) => ("<=", v),
        Operator::InRange { lo, hi } => {
            write!(out, "in [{}, {}]", literal(lo), literal(hi)).unwrap();
            return;
        }
        Operator::Matches(p) => {
            out.push_str("matches /");
            let mut chars = p.as_str().chars();
            while let Some(c) = chars.next() {
                match c {
                    '/' => out.push_str("\\/"),
                    '\\' => {
                        out.push('\\');
                        match chars.next() {
                            Some('/') => out.push('/'),
                            Some(n) => out.push(n),
                            None => {}
                        }
                    }
                    c => out.push(c),
                }
            }
            out.push('/');
            return;
        }
        Operator::WithinRadius { center, radius_m } => {
            write!(
                out,
                "within {radius_m:?} of ({:?}, {:?})",
                center.lat(),
                center.lon()
            )
            .unwrap();
            return;
        }
    };
    write!(out, "{sym} {}", literal(v)).unwrap();
}

fn literal(v: &Value) -> String {
    match v {
        Value::Bool(b) => b.to_string(),
        Value::Int(i) => i.to_string(),
        Value::Float(f) => format!("{f:?}"),
        Value::Text(s) => quote(s),
        Value::Geo(g) => format!("({:?}, {:?})", g.lat(), g.lon()),
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}
