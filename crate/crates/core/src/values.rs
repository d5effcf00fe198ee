//! Scalar values, three-valued truth and the comparison operators that turn
//! a value into a truth.

use std::fmt;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius used by the great-circle distance, in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValueError {
    #[error("non-finite float {0}")]
    NonFinite(f64),
    #[error("latitude {0} outside [-90, 90]")]
    Latitude(f64),
    #[error("longitude {0} outside [-180, 180]")]
    Longitude(f64),
}

/// A WGS84 position in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGeo")]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

#[derive(Deserialize)]
struct RawGeo {
    lat: f64,
    lon: f64,
}

impl TryFrom<RawGeo> for GeoPoint {
    type Error = ValueError;

    fn try_from(raw: RawGeo) -> Result<Self, Self::Error> {
        GeoPoint::new(raw.lat, raw.lon)
    }
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, ValueError> {
        if !lat.is_finite() {
            return Err(ValueError::NonFinite(lat));
        }
        if !lon.is_finite() {
            return Err(ValueError::NonFinite(lon));
        }
        if !(-90.0..=90.0).contains(&lat) {
            return Err(ValueError::Latitude(lat));
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(ValueError::Longitude(lon));
        }
        Ok(GeoPoint { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    /// Haversine great-circle distance in meters.
    pub fn distance_m(&self, other: &GeoPoint) -> f64 {
        let (phi1, phi2) = (self.lat.to_radians(), other.lat.to_radians());
        let dphi = phi2 - phi1;
        let dlambda = (other.lon - self.lon).to_radians();
        let a =
            (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
        2.0 * EARTH_RADIUS_M * a.sqrt().min(1.0).asin()
    }
}

/// Tag for the payload carried by a [`Value`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Bool,
    Float,
    Int,
    Text,
    Geo,
}

impl ValueKind {
    pub fn is_numeric(self) -> bool {
        matches!(self, ValueKind::Float | ValueKind::Int)
    }

    pub fn name(self) -> &'static str {
        match self {
            ValueKind::Bool => "bool",
            ValueKind::Float => "float",
            ValueKind::Int => "int",
            ValueKind::Text => "text",
            ValueKind::Geo => "geo",
        }
    }
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A scalar flowing from context factors through operators.
///
/// Floats are always finite; construction through [`Value::float`] or
/// deserialization rejects NaN and infinities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ValueRepr", into = "ValueRepr")]
pub enum Value {
    Bool(bool),
    Float(f64),
    Int(i64),
    Text(String),
    Geo(GeoPoint),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum ValueRepr {
    Bool { value: bool },
    Float { value: f64 },
    Int { value: i64 },
    Text { value: String },
    Geo { lat: f64, lon: f64 },
}

impl TryFrom<ValueRepr> for Value {
    type Error = ValueError;

    fn try_from(repr: ValueRepr) -> Result<Self, Self::Error> {
        Ok(match repr {
            ValueRepr::Bool { value } => Value::Bool(value),
            ValueRepr::Float { value } => Value::float(value)?,
            ValueRepr::Int { value } => Value::Int(value),
            ValueRepr::Text { value } => Value::Text(value),
            ValueRepr::Geo { lat, lon } => Value::Geo(GeoPoint::new(lat, lon)?),
        })
    }
}

impl From<Value> for ValueRepr {
    fn from(v: Value) -> Self {
        match v {
            Value::Bool(value) => ValueRepr::Bool { value },
            Value::Float(value) => ValueRepr::Float { value },
            Value::Int(value) => ValueRepr::Int { value },
            Value::Text(value) => ValueRepr::Text { value },
            Value::Geo(p) => ValueRepr::Geo {
                lat: p.lat,
                lon: p.lon,
            },
        }
    }
}

impl Value {
    pub fn float(v: f64) -> Result<Value, ValueError> {
        if v.is_finite() {
            Ok(Value::Float(v))
        } else {
            Err(ValueError::NonFinite(v))
        }
    }

    pub fn geo(lat: f64, lon: f64) -> Result<Value, ValueError> {
        GeoPoint::new(lat, lon).map(Value::Geo)
    }

    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Bool(_) => ValueKind::Bool,
            Value::Float(_) => ValueKind::Float,
            Value::Int(_) => ValueKind::Int,
            Value::Text(_) => ValueKind::Text,
            Value::Geo(_) => ValueKind::Geo,
        }
    }

    /// True when every float inside the value is finite.
    pub fn is_finite(&self) -> bool {
        match self {
            Value::Float(f) => f.is_finite(),
            Value::Geo(p) => p.lat.is_finite() && p.lon.is_finite(),
            _ => true,
        }
    }

    fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Float(f) => Some(*f),
            Value::Int(i) => Some(*i as f64),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Float(x) => write!(f, "{x:?}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Text(s) => write!(f, "{s:?}"),
            Value::Geo(p) => write!(f, "({:?}, {:?})", p.lat, p.lon),
        }
    }
}

/// Kleene three-valued truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Truth {
    True,
    False,
    Unknown,
}

impl From<bool> for Truth {
    fn from(b: bool) -> Self {
        if b {
            Truth::True
        } else {
            Truth::False
        }
    }
}

impl Truth {
    pub fn is_true(self) -> bool {
        self == Truth::True
    }

    pub fn to_bool(self) -> Option<bool> {
        match self {
            Truth::True => Some(true),
            Truth::False => Some(false),
            Truth::Unknown => None,
        }
    }
}

impl std::ops::Not for Truth {
    type Output = Truth;

    fn not(self) -> Truth {
        match self {
            Truth::True => Truth::False,
            Truth::False => Truth::True,
            Truth::Unknown => Truth::Unknown,
        }
    }
}

// False dominates.
impl std::ops::BitAnd for Truth {
    type Output = Truth;

    fn bitand(self, other: Truth) -> Truth {
        match (self, other) {
            (Truth::False, _) | (_, Truth::False) => Truth::False,
            (Truth::True, Truth::True) => Truth::True,
            _ => Truth::Unknown,
        }
    }
}

// True dominates.
impl std::ops::BitOr for Truth {
    type Output = Truth;

    fn bitor(self, other: Truth) -> Truth {
        match (self, other) {
            (Truth::True, _) | (_, Truth::True) => Truth::True,
            (Truth::False, Truth::False) => Truth::False,
            _ => Truth::Unknown,
        }
    }
}

impl fmt::Display for Truth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Truth::True => "true",
            Truth::False => "false",
            Truth::Unknown => "unknown",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PatternError {
    #[error("regex construct `{0}` is outside the supported subset")]
    Unsupported(String),
    #[error("invalid regex: {0}")]
    Invalid(String),
}

/// A regular expression restricted to the portable subset: literals, `.`,
/// `*`, `+`, `?`, classes `[...]`, alternation, grouping and `^`/`$`.
#[derive(Debug, Clone)]
pub struct Pattern {
    source: String,
    compiled: Regex,
}

impl Pattern {
    pub fn new(source: &str) -> Result<Pattern, PatternError> {
        check_subset(source)?;
        let compiled = Regex::new(source).map_err(|e| PatternError::Invalid(e.to_string()))?;
        Ok(Pattern {
            source: source.to_string(),
            compiled,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.source
    }

    pub fn is_match(&self, text: &str) -> bool {
        self.compiled.is_match(text)
    }
}

impl PartialEq for Pattern {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

fn check_subset(source: &str) -> Result<(), PatternError> {
    let mut chars = source.chars().peekable();
    let mut in_class = false;
    while let Some(c) = chars.next() {
        match c {
            '\\' => match chars.next() {
                Some(e) if e.is_ascii_punctuation() => {}
                Some(e) => return Err(PatternError::Unsupported(format!("\\{e}"))),
                None => return Err(PatternError::Invalid("trailing backslash".into())),
            },
            '[' if !in_class => {
                in_class = true;
                if chars.peek() == Some(&'[') {
                    return Err(PatternError::Unsupported("[[".into()));
                }
            }
            '[' if chars.peek() == Some(&':') => {
                return Err(PatternError::Unsupported("[:".into()));
            }
            ']' if in_class => in_class = false,
            '{' | '}' if !in_class => return Err(PatternError::Unsupported(c.to_string())),
            '(' if !in_class && chars.peek() == Some(&'?') => {
                return Err(PatternError::Unsupported("(?".into()));
            }
            _ => {}
        }
    }
    Ok(())
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("operator `{op}` cannot be applied to a {kind} value")]
    TypeMismatch { op: &'static str, kind: ValueKind },
    #[error("range lower bound {lo} exceeds upper bound {hi}")]
    EmptyRange { lo: Value, hi: Value },
    #[error("radius {0} must be a finite, non-negative number of meters")]
    Radius(f64),
}

/// A check of a single value against constants.
#[derive(Debug, Clone, PartialEq)]
pub enum Operator {
    Eq(Value),
    NotEq(Value),
    GreaterThan(Value),
    GreaterEq(Value),
    SmallerThan(Value),
    SmallerEq(Value),
    InRange { lo: Value, hi: Value },
    Matches(Pattern),
    WithinRadius { center: GeoPoint, radius_m: f64 },
}

impl Operator {
    pub fn in_range(lo: Value, hi: Value) -> Result<Operator, OperatorError> {
        for v in [&lo, &hi] {
            if !v.kind().is_numeric() {
                return Err(OperatorError::TypeMismatch {
                    op: "in",
                    kind: v.kind(),
                });
            }
        }
        if lo.as_f64() > hi.as_f64() {
            return Err(OperatorError::EmptyRange { lo, hi });
        }
        Ok(Operator::InRange { lo, hi })
    }

    pub fn within(center: GeoPoint, radius_m: f64) -> Result<Operator, OperatorError> {
        if !radius_m.is_finite() || radius_m < 0.0 {
            return Err(OperatorError::Radius(radius_m));
        }
        Ok(Operator::WithinRadius { center, radius_m })
    }

    /// Short wire name, shared by the JSON encoding.
    pub fn code(&self) -> &'static str {
        match self {
            Operator::Eq(_) => "eq",
            Operator::NotEq(_) => "ne",
            Operator::GreaterThan(_) => "gt",
            Operator::GreaterEq(_) => "ge",
            Operator::SmallerThan(_) => "lt",
            Operator::SmallerEq(_) => "le",
            Operator::InRange { .. } => "in",
            Operator::Matches(_) => "matches",
            Operator::WithinRadius { .. } => "within",
        }
    }

    /// Whether values of `kind` may be fed to this operator.
    pub fn admits(&self, kind: ValueKind) -> bool {
        match self {
            Operator::Eq(arg) | Operator::NotEq(arg) => {
                arg.kind() == kind || (arg.kind().is_numeric() && kind.is_numeric())
            }
            Operator::GreaterThan(arg)
            | Operator::GreaterEq(arg)
            | Operator::SmallerThan(arg)
            | Operator::SmallerEq(arg) => arg.kind().is_numeric() && kind.is_numeric(),
            Operator::InRange { .. } => kind.is_numeric(),
            Operator::Matches(_) => kind == ValueKind::Text,
            Operator::WithinRadius { .. } => kind == ValueKind::Geo,
        }
    }

    /// Applies the operator to an available value. Float comparisons are exact.
    pub fn apply(&self, v: &Value) -> Result<Truth, OperatorError> {
        if !self.admits(v.kind()) {
            return Err(OperatorError::TypeMismatch {
                op: self.code(),
                kind: v.kind(),
            });
        }
        let b = match self {
            Operator::Eq(arg) => values_equal(v, arg),
            Operator::NotEq(arg) => !values_equal(v, arg),
            Operator::GreaterThan(arg) => numeric_cmp(v, arg).is_gt(),
            Operator::GreaterEq(arg) => numeric_cmp(v, arg).is_ge(),
            Operator::SmallerThan(arg) => numeric_cmp(v, arg).is_lt(),
            Operator::SmallerEq(arg) => numeric_cmp(v, arg).is_le(),
            Operator::InRange { lo, hi } => {
                numeric_cmp(v, lo).is_ge() && numeric_cmp(v, hi).is_le()
            }
            Operator::Matches(p) => match v {
                Value::Text(s) => p.is_match(s),
                _ => unreachable!("admits() checked the kind"),
            },
            Operator::WithinRadius { center, radius_m } => match v {
                Value::Geo(p) => center.distance_m(p) <= *radius_m,
                _ => unreachable!("admits() checked the kind"),
            },
        };
        Ok(b.into())
    }
}

fn values_equal(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => x == y,
        _ if a.kind().is_numeric() && b.kind().is_numeric() => a.as_f64() == b.as_f64(),
        _ => a == b,
    }
}

/// Total order on finite numerics; Int/Int compares exactly.
fn numeric_cmp(a: &Value, b: &Value) -> std::cmp::Ordering {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => x.cmp(y),
        _ => {
            let (x, y) = (a.as_f64().unwrap_or(0.0), b.as_f64().unwrap_or(0.0));
            x.partial_cmp(&y)
                .expect("finite floats are totally ordered")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn f(x: f64) -> Value {
        Value::float(x).unwrap()
    }

    #[test]
    fn greater_than_charged_battery() {
        assert_eq!(
            Operator::GreaterThan(f(50.0)).apply(&f(62.0)),
            Ok(Truth::True)
        );
    }

    #[test]
    fn strict_and_inclusive_boundaries() {
        assert_eq!(
            Operator::SmallerThan(f(5.0)).apply(&f(5.0)),
            Ok(Truth::False)
        );
        let range = Operator::in_range(f(0.0), f(10.0)).unwrap();
        assert_eq!(range.apply(&f(10.0)), Ok(Truth::True));
        assert_eq!(range.apply(&f(0.0)), Ok(Truth::True));
        assert_eq!(range.apply(&f(10.000001)), Ok(Truth::False));
    }

    #[test]
    fn within_radius_zero_distance() {
        let c = GeoPoint::new(48.15, 11.58).unwrap();
        let op = Operator::within(c, 100.0).unwrap();
        assert_eq!(op.apply(&Value::Geo(c)), Ok(Truth::True));
    }

    #[test]
    fn haversine_one_degree_of_latitude() {
        let a = GeoPoint::new(0.0, 0.0).unwrap();
        let b = GeoPoint::new(1.0, 0.0).unwrap();
        let expected = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        assert!((a.distance_m(&b) - expected).abs() < 1e-6);
    }

    #[test]
    fn type_mismatches() {
        let re = Operator::Matches(Pattern::new("dark").unwrap());
        assert!(matches!(
            re.apply(&f(1.0)),
            Err(OperatorError::TypeMismatch { op: "matches", .. })
        ));
        assert!(Operator::GreaterThan(f(1.0))
            .apply(&Value::Text("x".into()))
            .is_err());
        assert!(Operator::Eq(Value::Bool(true)).apply(&f(1.0)).is_err());
        assert!(Operator::in_range(f(2.0), f(1.0)).is_err());
        assert!(Operator::within(GeoPoint::new(0.0, 0.0).unwrap(), -1.0).is_err());
    }

    #[test]
    fn mixed_int_float_comparisons() {
        assert_eq!(
            Operator::SmallerThan(Value::Int(5)).apply(&f(3.0)),
            Ok(Truth::True)
        );
        assert_eq!(
            Operator::Eq(Value::Int(14)).apply(&f(14.0)),
            Ok(Truth::True)
        );
        assert_eq!(
            Operator::GreaterEq(Value::Int(22)).apply(&Value::Int(23)),
            Ok(Truth::True)
        );
    }

    #[test]
    fn regex_subset() {
        let p = Pattern::new("^(walk|run)+(ing)?$").unwrap();
        assert!(p.is_match("walking"));
        assert!(p.is_match("runrun"));
        assert!(!p.is_match("bike"));
        assert!(Pattern::new("[a-c]x.*").unwrap().is_match("bx"));
        assert!(Pattern::new(r"a\.b").unwrap().is_match("a.b"));
        for bad in [r"\d+", "a{2}", "(?i)x", r"\w"] {
            assert!(
                matches!(Pattern::new(bad), Err(PatternError::Unsupported(_))),
                "{bad}"
            );
        }
        assert!(matches!(
            Pattern::new("(unclosed"),
            Err(PatternError::Invalid(_))
        ));
    }

    #[test]
    fn kleene_tables() {
        use Truth::*;
        assert_eq!(False & Unknown, False);
        assert_eq!(True & Unknown, Unknown);
        assert_eq!(True | Unknown, True);
        assert_eq!(False | Unknown, Unknown);
        assert_eq!(!Unknown, Unknown);
    }

    #[test]
    fn value_json_encoding() {
        assert_eq!(
            serde_json::to_string(&f(62.0)).unwrap(),
            r#"{"kind":"float","value":62.0}"#
        );
        let g = Value::geo(48.15, 11.58).unwrap();
        assert_eq!(
            serde_json::to_string(&g).unwrap(),
            r#"{"kind":"geo","lat":48.15,"lon":11.58}"#
        );
        let back: Value = serde_json::from_str(r#"{"kind":"int","value":14}"#).unwrap();
        assert_eq!(back, Value::Int(14));
        assert!(serde_json::from_str::<Value>(r#"{"kind":"geo","lat":91.0,"lon":0.0}"#).is_err());
        assert!(serde_json::from_str::<Value>(r#"{"kind":"float","value":"x"}"#).is_err());
        assert!(Value::float(f64::NAN).is_err());
        assert!(Value::float(f64::INFINITY).is_err());
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![-1e6f64..1e6, (-20i32..20).prop_map(|i| i as f64 * 0.5)]
    }

    fn geo() -> impl Strategy<Value = GeoPoint> {
        (-90.0f64..=90.0, -180.0f64..=180.0).prop_map(|(a, b)| GeoPoint::new(a, b).unwrap())
    }

    proptest! {
        #[test]
        fn trichotomy(a in finite(), b in finite()) {
            let hits = [
                Operator::GreaterThan(f(b)),
                Operator::Eq(f(b)),
                Operator::SmallerThan(f(b)),
            ]
            .iter()
            .filter(|op| op.apply(&f(a)).unwrap().is_true())
            .count();
            prop_assert_eq!(hits, 1);
        }

        #[test]
        fn range_is_conjunction(lo in finite(), width in 0.0f64..100.0, v in finite()) {
            let hi = lo + width;
            let range = Operator::in_range(f(lo), f(hi)).unwrap().apply(&f(v)).unwrap();
            let both = Operator::GreaterEq(f(lo)).apply(&f(v)).unwrap()
                & Operator::SmallerEq(f(hi)).apply(&f(v)).unwrap();
            prop_assert_eq!(range, both);
        }

        #[test]
        fn within_radius_symmetric(a in geo(), b in geo(), r in 0.0f64..2.0e7) {
            let ab = Operator::within(a, r).unwrap().apply(&Value::Geo(b)).unwrap();
            let ba = Operator::within(b, r).unwrap().apply(&Value::Geo(a)).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!(Operator::within(a, r).unwrap().apply(&Value::Geo(a)).unwrap().is_true());
        }
    }
}
