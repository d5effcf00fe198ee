//! Trace replay: context events in, a timeline of tick reports out.
//!
//! A trace is line-delimited JSON, one event per line:
//!
//! ```text
//! {"t":1500,"factor":"light.level","value":{"kind":"float","value":3.0}}
//! ```
//!
//! The first line may instead be a header setting the replay length and the
//! wall-clock position of time zero:
//!
//! ```text
//! {"duration":6000,"clock":{"weekday":5,"hour":23,"minute":30}}
//! ```

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::{Catalog, ClockOrigin, FactorId, Millis, Mode};
use crate::dsl::RuleFile;
use crate::engine::{Engine, EngineError, TickReport};
use crate::values::{Value, ValueKind};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("cannot read trace: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {message}")]
    KindMismatch { line: usize, message: String },
    #[error("line {line}: event at t={t} comes after t={previous}")]
    OutOfOrder {
        line: usize,
        t: Millis,
        previous: Millis,
    },
}

impl TraceError {
    pub fn line(&self) -> Option<usize> {
        match self {
            TraceError::Io(_) => None,
            TraceError::Parse { line, .. }
            | TraceError::KindMismatch { line, .. }
            | TraceError::OutOfOrder { line, .. } => Some(*line),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub t: Millis,
    pub factor: FactorId,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
    pub duration: Millis,
    pub clock: ClockOrigin,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    duration: Option<Millis>,
    clock: Option<ClockOrigin>,
}

/// Reads and validates a trace file.
pub fn load_trace(path: &Path, catalog: &Catalog) -> Result<Trace, TraceError> {
    parse_trace(&std::fs::read_to_string(path)?, catalog)
}

/// Parses trace text. Every event must target a known push or pulse factor
/// with a value of its kind; integers are accepted for float factors.
pub fn parse_trace(text: &str, catalog: &Catalog) -> Result<Trace, TraceError> {
    let mut trace = Trace::default();
    let mut header_duration = None;
    let mut first = true;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let json: serde_json::Value = serde_json::from_str(raw).map_err(|e| TraceError::Parse {
            line,
            message: e.to_string(),
        })?;
        if first && json.get("factor").is_none() {
            first = false;
            let h: Header = serde_json::from_value(json).map_err(|e| TraceError::Parse {
                line,
                message: format!("bad header: {e}"),
            })?;
            if let Some(clock) = h.clock {
                clock
                    .validate()
                    .map_err(|message| TraceError::Parse { line, message })?;
                trace.clock = clock;
            }
            header_duration = h.duration;
            continue;
        }
        first = false;
        let mut ev: TraceEvent = serde_json::from_value(json).map_err(|e| TraceError::Parse {
            line,
            message: e.to_string(),
        })?;
        let spec = catalog.get(&ev.factor).ok_or_else(|| TraceError::Parse {
            line,
            message: format!("unknown factor `{}`", ev.factor),
        })?;
        if spec.mode == Mode::Pull {
            return Err(TraceError::Parse {
                line,
                message: format!("`{}` is a pull factor driven by its provider", ev.factor),
            });
        }
        ev.value = match (spec.kind, ev.value) {
            (ValueKind::Float, Value::Int(n)) => Value::Float(n as f64),
            (kind, v) if v.kind() == kind => v,
            (kind, v) => {
                return Err(TraceError::KindMismatch {
                    line,
                    message: format!("`{}` is {kind}, got a {} value", ev.factor, v.kind()),
                })
            }
        };
        if spec.mode == Mode::Pulse && ev.value != Value::Bool(true) {
            return Err(TraceError::KindMismatch {
                line,
                message: format!("pulse `{}` only takes true", ev.factor),
            });
        }
        if let Some(prev) = trace.events.last() {
            if ev.t < prev.t {
                return Err(TraceError::OutOfOrder {
                    line,
                    t: ev.t,
                    previous: prev.t,
                });
            }
        }
        trace.events.push(ev);
    }
    let last = trace.events.last().map_or(0, |e| e.t);
    trace.duration = header_duration.unwrap_or(last);
    Ok(trace)
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("tick interval must be positive")]
    InvalidInterval,
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    pub reports: Vec<TickReport>,
}

impl Timeline {
    /// One canonical report per line, newline-terminated.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.reports {
            out.push_str(&r.to_canonical_json());
            out.push('\n');
        }
        out
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(self.to_jsonl().as_bytes())
    }
}

/// Tick time of the last report: the first multiple of `interval` at or
/// after `duration`.
pub fn final_tick(duration: Millis, interval: Millis) -> Millis {
    duration.div_ceil(interval) * interval
}

/// Replays `trace` against `rules` with the standard callbacks registered.
pub fn run(
    rules: &RuleFile,
    trace: &Trace,
    interval: Millis,
    catalog: &Catalog,
) -> Result<Timeline, ScenarioError> {
    if interval == 0 {
        return Err(ScenarioError::InvalidInterval);
    }
    let mut engine = Engine::standard(interval, catalog, trace.clock)?;
    for rule in &rules.rules {
        engine.add_rule(rule.clone())?;
    }
    run_engine(&mut engine, trace)
}

/// Replays `trace` on a prepared engine, starting at t = 0.
pub fn run_engine(engine: &mut Engine, trace: &Trace) -> Result<Timeline, ScenarioError> {
    let interval = engine.tick_interval();
    let end = final_tick(trace.duration, interval);
    let mut events = trace.events.iter().peekable();
    let mut reports = Vec::new();
    let mut now = 0;
    while now <= end {
        while let Some(ev) = events.next_if(|e| e.t <= now) {
            engine.ingest(&ev.factor, ev.value.clone(), ev.t)?;
        }
        reports.push(engine.tick(now)?);
        now += interval;
    }
    Ok(Timeline { reports })
}
