//! Logical expressions over context statements, evaluated with Kleene
//! three-valued logic against a [`ContextSnapshot`].

use std::fmt;

use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Value as Json};
use thiserror::Error;

use crate::context::{Catalog, ContextError, ContextSnapshot, FactorId};
use crate::values::{GeoPoint, Operator, Pattern, Truth, Value, ValueKind};

/// One factor checked by one operator.
#[derive(Debug, Clone, PartialEq)]
pub struct Statement {
    pub factor: FactorId,
    pub op: Operator,
}

impl Statement {
    pub fn new(factor: FactorId, op: Operator) -> Statement {
        Statement { factor, op }
    }

    /// Builds a statement, rejecting operators that cannot accept the
    /// factor's declared kind.
    pub fn checked(
        factor: FactorId,
        op: Operator,
        kind: ValueKind,
    ) -> Result<Statement, ExprError> {
        if !op.admits(kind) {
            return Err(ExprError::KindMismatch {
                factor: factor.to_string(),
                op: op.code(),
                kind,
            });
        }
        Ok(Statement { factor, op })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Connective {
    And,
    Or,
    Xor,
    Nand,
    Nor,
    Xnor,
}

impl Connective {
    pub const ALL: [Connective; 6] = [
        Connective::And,
        Connective::Or,
        Connective::Xor,
        Connective::Nand,
        Connective::Nor,
        Connective::Xnor,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            Connective::And => "and",
            Connective::Or => "or",
            Connective::Xor => "xor",
            Connective::Nand => "nand",
            Connective::Nor => "nor",
            Connective::Xnor => "xnor",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Connective> {
        Connective::ALL.into_iter().find(|c| c.keyword() == s)
    }

    /// Binding strength: larger binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            Connective::And | Connective::Nand => 3,
            Connective::Xor | Connective::Xnor => 2,
            Connective::Or | Connective::Nor => 1,
        }
    }

    pub fn apply(self, a: Truth, b: Truth) -> Truth {
        match self {
            Connective::And => a & b,
            Connective::Or => a | b,
            Connective::Nand => !(a & b),
            Connective::Nor => !(a | b),
            Connective::Xor => match (a.to_bool(), b.to_bool()) {
                (Some(x), Some(y)) => (x != y).into(),
                _ => Truth::Unknown,
            },
            Connective::Xnor => match (a.to_bool(), b.to_bool()) {
                (Some(x), Some(y)) => (x == y).into(),
                _ => Truth::Unknown,
            },
        }
    }
}

impl fmt::Display for Connective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// A logical expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Stmt(Statement),
    Not(Box<Expr>),
    Binary {
        op: Connective,
        left: Box<Expr>,
        right: Box<Expr>,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error("operator `{op}` cannot test factor `{factor}` of kind {kind}")]
    KindMismatch {
        factor: String,
        op: &'static str,
        kind: ValueKind,
    },
    #[error("invalid expression JSON: {0}")]
    Json(String),
}

impl Expr {
    pub fn stmt(factor: FactorId, op: Operator) -> Expr {
        Expr::Stmt(Statement::new(factor, op))
    }

    pub fn not(child: Expr) -> Expr {
        Expr::Not(Box::new(child))
    }

    pub fn binary(op: Connective, left: Expr, right: Expr) -> Expr {
        Expr::Binary {
            op,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Stmt(_) => 1,
            Expr::Not(c) => 1 + c.depth(),
            Expr::Binary { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Visits every statement, passing its path from the root.
    pub fn for_each_leaf<'a>(&'a self, f: &mut impl FnMut(&str, &'a Statement)) {
        fn walk<'a>(
            e: &'a Expr,
            path: &mut Vec<&'static str>,
            f: &mut impl FnMut(&str, &'a Statement),
        ) {
            match e {
                Expr::Stmt(s) => {
                    let p = if path.is_empty() {
                        "$".to_string()
                    } else {
                        format!("$.{}", path.join("."))
                    };
                    f(&p, s)
                }
                Expr::Not(c) => {
                    path.push("child");
                    walk(c, path, f);
                    path.pop();
                }
                Expr::Binary { left, right, .. } => {
                    path.push("left");
                    walk(left, path, f);
                    path.pop();
                    path.push("right");
                    walk(right, path, f);
                    path.pop();
                }
            }
        }
        walk(self, &mut Vec::new(), f)
    }

    /// Kleene evaluation. Both children of a connective are always evaluated.
    pub fn eval(&self, snap: &ContextSnapshot) -> Result<Truth, ExprError> {
        match self {
            Expr::Stmt(s) => eval_statement(s, snap),
            Expr::Not(c) => Ok(!c.eval(snap)?),
            Expr::Binary { op, left, right } => {
                let a = left.eval(snap)?;
                let b = right.eval(snap)?;
                Ok(op.apply(a, b))
            }
        }
    }

    pub fn to_json(&self) -> Json {
        serde_json::to_value(self).expect("expressions serialize")
    }
}

/// Unavailable factors evaluate to Unknown; a kind mismatch between the
/// operator and the stored value is an error.
pub fn eval_statement(s: &Statement, snap: &ContextSnapshot) -> Result<Truth, ExprError> {
    match snap.lookup(&s.factor)? {
        None => Ok(Truth::Unknown),
        Some(v) => s.op.apply(v).map_err(|_| ExprError::KindMismatch {
            factor: s.factor.to_string(),
            op: s.op.code(),
            kind: v.kind(),
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    UnknownFactor,
    KindMismatch,
}

/// A problem found in an expression, located by its leaf path
/// (`$`, `$.left.right`, ...).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExprIssue {
    pub kind: IssueKind,
    pub path: String,
    pub factor: String,
    pub message: String,
}

/// Checks every leaf against the catalog. An empty list means valid.
pub fn validate(expr: &Expr, catalog: &Catalog) -> Vec<ExprIssue> {
    let mut issues = Vec::new();
    expr.for_each_leaf(&mut |path, s| match catalog.get(&s.factor) {
        None => issues.push(ExprIssue {
            kind: IssueKind::UnknownFactor,
            path: path.to_string(),
            factor: s.factor.to_string(),
            message: format!("unknown factor `{}`", s.factor),
        }),
        Some(spec) if !s.op.admits(spec.kind) => issues.push(ExprIssue {
            kind: IssueKind::KindMismatch,
            path: path.to_string(),
            factor: s.factor.to_string(),
            message: format!(
                "operator `{}` cannot test {} factor `{}`",
                s.op.code(),
                spec.kind,
                s.factor
            ),
        }),
        Some(_) => {}
    });
    issues
}

// JSON encoding. Scalars are written bare: the value's JSON type carries
// its kind (integers vs. numbers with a fraction or exponent).

fn scalar_to_json(v: &Value) -> Json {
    match v {
        Value::Bool(b) => json!(b),
        Value::Float(f) => json!(f),
        Value::Int(i) => json!(i),
        Value::Text(s) => json!(s),
        Value::Geo(p) => json!({"lat": p.lat(), "lon": p.lon()}),
    }
}

fn scalar_from_json(j: &Json) -> Result<Value, ExprError> {
    let bad = || ExprError::Json(format!("unsupported literal {j}"));
    Ok(match j {
        Json::Bool(b) => Value::Bool(*b),
        Json::Number(n) if n.is_i64() => Value::Int(n.as_i64().expect("checked")),
        Json::Number(n) if n.is_f64() => {
            Value::float(n.as_f64().expect("checked")).map_err(|_| bad())?
        }
        Json::String(s) => Value::Text(s.clone()),
        Json::Object(_) => Value::Geo(geo_from_json(j)?),
        _ => return Err(bad()),
    })
}

fn geo_from_json(j: &Json) -> Result<GeoPoint, ExprError> {
    let lat = j.get("lat").and_then(Json::as_f64);
    let lon = j.get("lon").and_then(Json::as_f64);
    match (lat, lon) {
        (Some(lat), Some(lon)) => {
            GeoPoint::new(lat, lon).map_err(|e| ExprError::Json(e.to_string()))
        }
        _ => Err(ExprError::Json(format!("expected {{lat, lon}}, got {j}"))),
    }
}

pub(crate) fn operator_arg(op: &Operator) -> Json {
    match op {
        Operator::Eq(v)
        | Operator::NotEq(v)
        | Operator::GreaterThan(v)
        | Operator::GreaterEq(v)
        | Operator::SmallerThan(v)
        | Operator::SmallerEq(v) => scalar_to_json(v),
        Operator::InRange { lo, hi } => json!([scalar_to_json(lo), scalar_to_json(hi)]),
        Operator::Matches(p) => json!(p.as_str()),
        Operator::WithinRadius { center, radius_m } => {
            json!({"lat": center.lat(), "lon": center.lon(), "radius_m": radius_m})
        }
    }
}

pub(crate) fn operator_from_json(code: &str, arg: &Json) -> Result<Operator, ExprError> {
    let err = |e: String| ExprError::Json(e);
    Ok(match code {
        "eq" => Operator::Eq(scalar_from_json(arg)?),
        "ne" => Operator::NotEq(scalar_from_json(arg)?),
        "gt" => Operator::GreaterThan(scalar_from_json(arg)?),
        "ge" => Operator::GreaterEq(scalar_from_json(arg)?),
        "lt" => Operator::SmallerThan(scalar_from_json(arg)?),
        "le" => Operator::SmallerEq(scalar_from_json(arg)?),
        "in" => match arg.as_array().map(Vec::as_slice) {
            Some([lo, hi]) => Operator::in_range(scalar_from_json(lo)?, scalar_from_json(hi)?)
                .map_err(|e| err(e.to_string()))?,
            _ => return Err(err(format!("`in` expects [lo, hi], got {arg}"))),
        },
        "matches" => {
            let src = arg
                .as_str()
                .ok_or_else(|| err(format!("`matches` expects a string, got {arg}")))?;
            Operator::Matches(Pattern::new(src).map_err(|e| err(e.to_string()))?)
        }
        "within" => {
            let radius = arg
                .get("radius_m")
                .and_then(Json::as_f64)
                .ok_or_else(|| err("missing radius_m".into()))?;
            Operator::within(geo_from_json(arg)?, radius).map_err(|e| err(e.to_string()))?
        }
        other => return Err(err(format!("unknown operator `{other}`"))),
    })
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Expr::Stmt(st) => {
                let mut m = s.serialize_map(Some(4))?;
                m.serialize_entry("type", "stmt")?;
                m.serialize_entry("factor", &st.factor)?;
                m.serialize_entry("op", st.op.code())?;
                m.serialize_entry("arg", &operator_arg(&st.op))?;
                m.end()
            }
            Expr::Not(c) => {
                let mut m = s.serialize_map(Some(3))?;
                m.serialize_entry("type", "unary")?;
                m.serialize_entry("op", "not")?;
                m.serialize_entry("child", c)?;
                m.end()
            }
            Expr::Binary { op, left, right } => {
                let mut m = s.serialize_map(Some(4))?;
                m.serialize_entry("type", "binary")?;
                m.serialize_entry("op", op.keyword())?;
                m.serialize_entry("left", left)?;
                m.serialize_entry("right", right)?;
                m.end()
            }
        }
    }
}

impl Expr {
    pub fn from_json(j: &Json) -> Result<Expr, ExprError> {
        let field = |k: &str| {
            j.get(k)
                .ok_or_else(|| ExprError::Json(format!("missing `{k}` in {j}")))
        };
        let text = |k: &str| {
            field(k)?
                .as_str()
                .ok_or_else(|| ExprError::Json(format!("`{k}` must be a string")))
        };
        match text("type")? {
            "stmt" => {
                let factor: FactorId = text("factor")?.parse()?;
                Ok(Expr::stmt(
                    factor,
                    operator_from_json(text("op")?, field("arg")?)?,
                ))
            }
            "unary" => match text("op")? {
                "not" => Ok(Expr::not(Expr::from_json(field("child")?)?)),
                other => Err(ExprError::Json(format!("unknown unary operator `{other}`"))),
            },
            "binary" => {
                let op = Connective::from_keyword(text("op")?)
                    .ok_or_else(|| ExprError::Json(format!("unknown connective in {j}")))?;
                Ok(Expr::binary(
                    op,
                    Expr::from_json(field("left")?)?,
                    Expr::from_json(field("right")?)?,
                ))
            }
            other => Err(ExprError::Json(format!("unknown node type `{other}`"))),
        }
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let j = Json::deserialize(d)?;
        Expr::from_json(&j).map_err(serde::de::Error::custom)
    }
}
