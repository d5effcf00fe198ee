//! Browser entry points. The `#[wasm_bindgen]` wrappers only convert errors;
//! the plain functions below them are what the native tests exercise.

use m3i::context::classify_pose;
use m3i::dsl::{self, Diagnostic};
use m3i::engine::STANDARD_CALLBACKS;
use m3i::{scenario, Catalog, Connective, Expr, Truth};
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Statements beyond this make the 3^n table too large for a page.
pub const MAX_PROPOSITIONS: usize = 6;

fn diagnostics(d: &[Diagnostic]) -> String {
    d.iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Replays a trace against a rule file using the built-in catalog.
/// `tick == 0` takes the interval from the rule file's `tick` header.
pub fn run_simulation(rules: &str, trace: &str, tick: u64) -> Result<String, String> {
    let catalog = Catalog::standard();
    let file =
        dsl::parse_and_check(rules, &catalog, &STANDARD_CALLBACKS).map_err(|d| diagnostics(&d))?;
    let tick = match tick {
        0 => file
            .tick
            .ok_or("no tick interval: set one or add a `tick` header")?,
        t => t,
    };
    let trace = scenario::parse_trace(trace, &catalog).map_err(|e| format!("trace: {e}"))?;
    let timeline = scenario::run(&file, &trace, tick, &catalog).map_err(|e| e.to_string())?;
    Ok(timeline.to_jsonl())
}

/// Kleene truth table of a condition, one column per distinct statement.
pub fn condition_table(condition: &str) -> Result<String, String> {
    let parsed = dsl::parse(&format!(
        "rule table:\n  when {condition}\n  then nothing\n"
    ))
    .map_err(|d| diagnostics(&d))?;
    let expr = &parsed.file.rules[0].when;
    let mut props: Vec<String> = Vec::new();
    expr.for_each_leaf(&mut |_, s| {
        let text = dsl::print_expr(&Expr::Stmt(s.clone()));
        if !props.contains(&text) {
            props.push(text);
        }
    });
    if props.len() > MAX_PROPOSITIONS {
        return Err(format!(
            "{} distinct statements; at most {MAX_PROPOSITIONS} fit in a table",
            props.len()
        ));
    }
    let levels = [Truth::False, Truth::Unknown, Truth::True];
    let rows: Vec<_> = (0..3usize.pow(props.len() as u32))
        .map(|mut n| {
            let inputs: Vec<Truth> = (0..props.len())
                .map(|_| {
                    let t = levels[n % 3];
                    n /= 3;
                    t
                })
                .collect();
            let result = eval_assigned(expr, &props, &inputs);
            json!({
                "inputs": inputs.iter().map(Truth::to_string).collect::<Vec<_>>(),
                "result": result.to_string(),
            })
        })
        .collect();
    Ok(
        json!({ "condition": dsl::print_expr(expr), "propositions": props, "rows": rows })
            .to_string(),
    )
}

fn eval_assigned(e: &Expr, props: &[String], inputs: &[Truth]) -> Truth {
    match e {
        Expr::Stmt(s) => {
            let text = dsl::print_expr(&Expr::Stmt(s.clone()));
            inputs[props
                .iter()
                .position(|p| *p == text)
                .expect("collected above")]
        }
        Expr::Not(c) => !eval_assigned(c, props, inputs),
        Expr::Binary { op, left, right } => Connective::apply(
            *op,
            eval_assigned(left, props, inputs),
            eval_assigned(right, props, inputs),
        ),
    }
}

#[wasm_bindgen]
pub fn simulate(rules: &str, trace: &str, tick: u32) -> Result<String, JsValue> {
    run_simulation(rules, trace, tick.into()).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn truth_table(condition: &str) -> Result<String, JsValue> {
    condition_table(condition).map_err(|e| JsValue::from_str(&e))
}

/// Pose name for an accelerometer reading in m/s².
#[wasm_bindgen]
pub fn pose(x: f64, y: f64, z: f64) -> String {
    classify_pose([x, y, z]).as_str().to_string()
}
