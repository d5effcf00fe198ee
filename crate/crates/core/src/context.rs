//! Context factors, context groups and per-tick snapshots.
//!
//! A [`Registry`] owns every registered factor. Push and pulse factors are
//! fed through [`Registry::ingest_event`], which appends to one time-ordered
//! queue; pull factors are polled from their [`ContextGroup`] when a snapshot
//! is built. Events only become visible at the next [`Registry::build_snapshot`]
//! whose tick time is at or after the event time.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::values::{Value, ValueKind};

/// Milliseconds since scenario start.
pub type Millis = u64;

/// Standard gravity used by the pose classifier, m/s².
pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContextError {
    #[error("factor id `{0}` must look like `group.name` (lowercase, digits, underscores)")]
    InvalidId(String),
    #[error("factor `{0}` is already registered")]
    DuplicateFactor(FactorId),
    #[error("unknown factor `{0}`")]
    UnknownFactor(String),
    #[error("factor `{id}` expects {expected} values, got {got}")]
    KindMismatch {
        id: FactorId,
        expected: ValueKind,
        got: ValueKind,
    },
    #[error("factor `{0}` received a non-finite value")]
    NonFiniteValue(FactorId),
    #[error("factor `{0}` is polled and does not accept events")]
    NotIngestible(FactorId),
    #[error("pulse factor `{0}` must be boolean")]
    PulseNotBool(FactorId),
    #[error("event for `{id}` at t={at} is older than its latest event at t={latest}")]
    OutOfOrder {
        id: FactorId,
        at: Millis,
        latest: Millis,
    },
    #[error("snapshot time {at} precedes previous snapshot at {previous}")]
    TimeWentBackwards { at: Millis, previous: Millis },
    #[error("context group `{group}` does not provide method `{method}`")]
    UnknownMethod { group: String, method: String },
    #[error("invalid catalog: {0}")]
    Catalog(String),
}

/// `group.name` identifier of a context factor.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FactorId {
    group: String,
    name: String,
}

fn valid_segment(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some('a'..='z'))
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

impl FactorId {
    pub fn new(group: &str, name: &str) -> Result<FactorId, ContextError> {
        if valid_segment(group) && valid_segment(name) {
            Ok(FactorId {
                group: group.to_string(),
                name: name.to_string(),
            })
        } else {
            Err(ContextError::InvalidId(format!("{group}.{name}")))
        }
    }

    pub fn group(&self) -> &str {
        &self.group
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl FromStr for FactorId {
    type Err = ContextError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once('.') {
            Some((g, n)) => FactorId::new(g, n).map_err(|_| ContextError::InvalidId(s.to_string())),
            None => Err(ContextError::InvalidId(s.to_string())),
        }
    }
}

impl fmt::Display for FactorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.group, self.name)
    }
}

impl Serialize for FactorId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FactorId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// How a factor acquires values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Polled synchronously when a snapshot is built.
    Pull,
    /// Delivered as events; the latest value is cached.
    Push,
    /// Delivered as events and visible as `true` in exactly one snapshot.
    Pulse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSpec {
    pub id: FactorId,
    pub kind: ValueKind,
    pub mode: Mode,
    #[serde(default)]
    pub description: String,
}

impl FactorSpec {
    pub fn new(id: FactorId, kind: ValueKind, mode: Mode, description: &str) -> FactorSpec {
        FactorSpec {
            id,
            kind,
            mode,
            description: description.to_string(),
        }
    }
}

/// The list of factor specs consumed by the checker, the replayer and the UI.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Catalog {
    specs: Vec<FactorSpec>,
}

const STANDARD_CATALOG: &str = include_str!("../catalog.json");

impl Catalog {
    pub fn new(specs: Vec<FactorSpec>) -> Result<Catalog, ContextError> {
        let mut seen = std::collections::BTreeSet::new();
        for spec in &specs {
            if !seen.insert(spec.id.clone()) {
                return Err(ContextError::DuplicateFactor(spec.id.clone()));
            }
            if spec.mode == Mode::Pulse && spec.kind != ValueKind::Bool {
                return Err(ContextError::PulseNotBool(spec.id.clone()));
            }
        }
        Ok(Catalog { specs })
    }

    pub fn from_json(text: &str) -> Result<Catalog, ContextError> {
        let specs: Vec<FactorSpec> =
            serde_json::from_str(text).map_err(|e| ContextError::Catalog(e.to_string()))?;
        Catalog::new(specs)
    }

    /// The shipped catalog of simulated factors.
    pub fn standard() -> Catalog {
        Catalog::from_json(STANDARD_CATALOG).expect("shipped catalog is valid")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serializes")
    }

    pub fn get(&self, id: &FactorId) -> Option<&FactorSpec> {
        self.specs.iter().find(|s| &s.id == id)
    }

    pub fn lookup_str(&self, id: &str) -> Option<&FactorSpec> {
        self.specs.iter().find(|s| s.id.to_string() == id)
    }

    pub fn specs(&self) -> &[FactorSpec] {
        &self.specs
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct ProviderError(pub String);

/// A method advertised by a [`ContextGroup`].
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSpec {
    pub id: String,
    pub kind: ValueKind,
    pub description: String,
}

/// Extension point for new sources of polled context.
///
/// Every advertised method id becomes a pull factor `<group>.<method>`;
/// polling it calls [`ContextGroup::execute`] with the method id and the
/// parameter list bound at registration.
pub trait ContextGroup: Send {
    fn name(&self) -> &str;
    fn methods(&self) -> Vec<MethodSpec>;
    fn execute(
        &mut self,
        method: &str,
        params: &[Value],
        now: Millis,
    ) -> Result<Value, ProviderError>;
}

pub type SharedGroup = Arc<Mutex<dyn ContextGroup>>;

/// Wall-clock position of scenario time zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClockOrigin {
    /// ISO weekday, 1 = Monday … 7 = Sunday.
    pub weekday: u8,
    pub hour: u8,
    pub minute: u8,
}

impl Default for ClockOrigin {
    fn default() -> Self {
        ClockOrigin {
            weekday: 1,
            hour: 12,
            minute: 0,
        }
    }
}

impl ClockOrigin {
    pub fn validate(&self) -> Result<(), String> {
        if !(1..=7).contains(&self.weekday) || self.hour > 23 || self.minute > 59 {
            return Err(format!(
                "clock origin weekday {} {:02}:{:02} is out of range",
                self.weekday, self.hour, self.minute
            ));
        }
        Ok(())
    }
}

const DAY_MS: u64 = 24 * 3600 * 1000;

/// Simulated clock group: `weekday`, `hour`, `minute` and `ms` since start.
#[derive(Debug, Clone)]
pub struct ClockGroup {
    origin: ClockOrigin,
}

impl ClockGroup {
    pub fn new(origin: ClockOrigin) -> ClockGroup {
        ClockGroup { origin }
    }
}

impl ContextGroup for ClockGroup {
    fn name(&self) -> &str {
        "clock"
    }

    fn methods(&self) -> Vec<MethodSpec> {
        [
            ("weekday", "ISO weekday, 1 = Monday"),
            ("hour", "hour of day, 0-23"),
            ("minute", "minute of hour, 0-59"),
            ("ms", "milliseconds since scenario start"),
        ]
        .into_iter()
        .map(|(id, d)| MethodSpec {
            id: id.into(),
            kind: ValueKind::Int,
            description: d.into(),
        })
        .collect()
    }

    fn execute(
        &mut self,
        method: &str,
        _params: &[Value],
        now: Millis,
    ) -> Result<Value, ProviderError> {
        let o = self.origin;
        let start_of_day = (o.hour as u64 * 60 + o.minute as u64) * 60_000;
        let abs = start_of_day + now;
        let in_day = abs % DAY_MS;
        Ok(Value::Int(match method {
            "weekday" => ((o.weekday as u64 - 1 + abs / DAY_MS) % 7 + 1) as i64,
            "hour" => (in_day / 3_600_000) as i64,
            "minute" => (in_day / 60_000 % 60) as i64,
            "ms" => now as i64,
            other => return Err(ProviderError(format!("clock has no method `{other}`"))),
        }))
    }
}

/// Coarse device pose derived from a gravity reading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pose {
    DisplayUp,
    DisplayDown,
    Upright,
    Undetermined,
}

impl Pose {
    pub fn as_str(self) -> &'static str {
        match self {
            Pose::DisplayUp => "display_up",
            Pose::DisplayDown => "display_down",
            Pose::Upright => "upright",
            Pose::Undetermined => "undetermined",
        }
    }
}

/// Classifies an accelerometer reading (device axes, z out of the screen).
///
/// Readings whose magnitude lies outside `[0.5 g, 1.5 g]` mean the device is
/// moving and yield [`Pose::Undetermined`].
pub fn classify_pose(accel: [f64; 3]) -> Pose {
    let [_, y, z] = accel;
    let magnitude = accel.iter().map(|c| c * c).sum::<f64>().sqrt();
    if !(0.5 * GRAVITY..=1.5 * GRAVITY).contains(&magnitude) {
        return Pose::Undetermined;
    }
    if z >= 0.8 * GRAVITY {
        Pose::DisplayUp
    } else if z <= -0.8 * GRAVITY {
        Pose::DisplayDown
    } else if y >= 0.8 * GRAVITY {
        Pose::Upright
    } else {
        Pose::Undetermined
    }
}

/// One factor's state inside a snapshot; `value: None` means Unavailable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Entry {
    pub value: Option<Value>,
    pub updated_at: Option<Millis>,
}

/// Immutable per-tick view of every registered factor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContextSnapshot {
    tick_time: Millis,
    entries: BTreeMap<FactorId, Entry>,
}

impl ContextSnapshot {
    pub fn tick_time(&self) -> Millis {
        self.tick_time
    }

    pub fn entries(&self) -> &BTreeMap<FactorId, Entry> {
        &self.entries
    }

    pub fn entry(&self, id: &FactorId) -> Option<&Entry> {
        self.entries.get(id)
    }

    /// The value of a factor, or `Ok(None)` while it is Unavailable.
    pub fn lookup(&self, id: &FactorId) -> Result<Option<&Value>, ContextError> {
        self.entries
            .get(id)
            .map(|e| e.value.as_ref())
            .ok_or_else(|| ContextError::UnknownFactor(id.to_string()))
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("snapshot serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Builds a snapshot directly from values, for tests and tools that
    /// evaluate expressions without a registry.
    pub fn from_values<I>(tick_time: Millis, values: I) -> ContextSnapshot
    where
        I: IntoIterator<Item = (FactorId, Option<Value>)>,
    {
        let entries = values
            .into_iter()
            .map(|(id, value)| {
                let updated_at = value.as_ref().map(|_| tick_time);
                (id, Entry { value, updated_at })
            })
            .collect();
        ContextSnapshot { tick_time, entries }
    }
}

type PollFn = Box<dyn FnMut(Millis) -> Result<Value, ProviderError> + Send>;

enum PullSource {
    None,
    Group {
        group: SharedGroup,
        method: String,
        params: Vec<Value>,
    },
    Function(PollFn),
}

struct Slot {
    spec: FactorSpec,
    latest: Option<Value>,
    updated_at: Option<Millis>,
    latched: bool,
    /// Time of the newest event accepted into the queue for this factor.
    newest_queued: Option<Millis>,
    source: PullSource,
}

/// Computes one factor from others whenever one of its inputs changes.
pub struct Derivation {
    pub inputs: Vec<FactorId>,
    pub output: FactorId,
    pub derive: fn(&[Value]) -> Option<Value>,
}

fn derive_pose(inputs: &[Value]) -> Option<Value> {
    let mut accel = [0.0; 3];
    for (slot, v) in accel.iter_mut().zip(inputs) {
        match v {
            Value::Float(f) => *slot = *f,
            Value::Int(i) => *slot = *i as f64,
            _ => return None,
        }
    }
    Some(Value::Text(classify_pose(accel).as_str().to_string()))
}

struct QueuedEvent {
    id: FactorId,
    value: Value,
    at: Millis,
}

/// Owner of every context factor and the ordered event queue.
pub struct Registry {
    slots: BTreeMap<FactorId, Slot>,
    queue: VecDeque<QueuedEvent>,
    derivations: Vec<Derivation>,
    last_tick: Option<Millis>,
    diagnostics: Vec<String>,
}

impl Default for Registry {
    fn default() -> Self {
        Registry::new()
    }
}

impl Registry {
    pub fn new() -> Registry {
        Registry {
            slots: BTreeMap::new(),
            queue: VecDeque::new(),
            derivations: Vec::new(),
            last_tick: None,
            diagnostics: Vec::new(),
        }
    }

    /// Builds a registry for every factor in `catalog`.
    ///
    /// Pull factors of the `clock` group are bound to a simulated clock
    /// starting at `origin`; any other pull factor stays Unavailable until a
    /// provider is bound with [`Registry::bind_poll`]. If the catalog holds
    /// `accel.x/y/z` and `orientation.pose`, the pose is derived from them.
    pub fn from_catalog(catalog: &Catalog, origin: ClockOrigin) -> Result<Registry, ContextError> {
        let mut reg = Registry::new();
        let clock: SharedGroup = Arc::new(Mutex::new(ClockGroup::new(origin)));
        for spec in catalog.specs() {
            let id = spec.id.clone();
            reg.register_factor(spec.clone())?;
            if spec.mode == Mode::Pull && id.group() == "clock" {
                reg.slots.get_mut(&id).expect("just registered").source = PullSource::Group {
                    group: clock.clone(),
                    method: id.name().to_string(),
                    params: Vec::new(),
                };
            }
        }
        let ids = ["accel.x", "accel.y", "accel.z", "orientation.pose"]
            .map(|s| s.parse::<FactorId>().unwrap());
        if ids.iter().all(|id| reg.slots.contains_key(id)) {
            let [x, y, z, pose] = ids;
            reg.add_derivation(Derivation {
                inputs: vec![x, y, z],
                output: pose,
                derive: derive_pose,
            })?;
        }
        Ok(reg)
    }

    pub fn register_factor(&mut self, spec: FactorSpec) -> Result<FactorId, ContextError> {
        if self.slots.contains_key(&spec.id) {
            return Err(ContextError::DuplicateFactor(spec.id));
        }
        if spec.mode == Mode::Pulse && spec.kind != ValueKind::Bool {
            return Err(ContextError::PulseNotBool(spec.id));
        }
        let id = spec.id.clone();
        self.slots.insert(
            id.clone(),
            Slot {
                spec,
                latest: None,
                updated_at: None,
                latched: false,
                newest_queued: None,
                source: PullSource::None,
            },
        );
        Ok(id)
    }

    /// Registers a pull factor backed by a closure.
    pub fn register_poll<F>(&mut self, spec: FactorSpec, poll: F) -> Result<FactorId, ContextError>
    where
        F: FnMut(Millis) -> Result<Value, ProviderError> + Send + 'static,
    {
        let id = self.register_factor(FactorSpec {
            mode: Mode::Pull,
            ..spec
        })?;
        self.slots.get_mut(&id).expect("registered").source = PullSource::Function(Box::new(poll));
        Ok(id)
    }

    /// Replaces the provider of an already registered pull factor.
    pub fn bind_poll<F>(&mut self, id: &FactorId, poll: F) -> Result<(), ContextError>
    where
        F: FnMut(Millis) -> Result<Value, ProviderError> + Send + 'static,
    {
        let slot = self
            .slots
            .get_mut(id)
            .ok_or_else(|| ContextError::UnknownFactor(id.to_string()))?;
        if slot.spec.mode != Mode::Pull {
            return Err(ContextError::NotIngestible(id.clone()));
        }
        slot.source = PullSource::Function(Box::new(poll));
        Ok(())
    }

    /// Registers every method of a context group as a pull factor
    /// `<group>.<method>`. `params` supplies per-method arguments.
    pub fn register_group(
        &mut self,
        group: SharedGroup,
        params: &BTreeMap<String, Vec<Value>>,
    ) -> Result<Vec<FactorId>, ContextError> {
        let (name, methods) = {
            let g = group.lock().expect("context group lock");
            (g.name().to_string(), g.methods())
        };
        for method in params.keys() {
            if !methods.iter().any(|m| &m.id == method) {
                return Err(ContextError::UnknownMethod {
                    group: name,
                    method: method.clone(),
                });
            }
        }
        let mut ids = Vec::new();
        for m in methods {
            let id = FactorId::new(&name, &m.id)?;
            let spec = FactorSpec::new(id, m.kind, Mode::Pull, &m.description);
            let id = self.register_factor(spec)?;
            self.slots.get_mut(&id).expect("registered").source = PullSource::Group {
                group: group.clone(),
                method: m.id.clone(),
                params: params.get(&m.id).cloned().unwrap_or_default(),
            };
            ids.push(id);
        }
        Ok(ids)
    }

    pub fn add_derivation(&mut self, derivation: Derivation) -> Result<(), ContextError> {
        for id in derivation
            .inputs
            .iter()
            .chain(std::iter::once(&derivation.output))
        {
            if !self.slots.contains_key(id) {
                return Err(ContextError::UnknownFactor(id.to_string()));
            }
        }
        self.derivations.push(derivation);
        Ok(())
    }

    pub fn spec(&self, id: &FactorId) -> Option<&FactorSpec> {
        self.slots.get(id).map(|s| &s.spec)
    }

    pub fn catalog(&self) -> Catalog {
        Catalog {
            specs: self.slots.values().map(|s| s.spec.clone()).collect(),
        }
    }

    /// Validates and queues an event; it becomes visible at the next snapshot
    /// whose tick time is `>= at`.
    pub fn ingest_event(
        &mut self,
        id: &FactorId,
        value: Value,
        at: Millis,
    ) -> Result<(), ContextError> {
        let slot = self
            .slots
            .get_mut(id)
            .ok_or_else(|| ContextError::UnknownFactor(id.to_string()))?;
        if slot.spec.mode == Mode::Pull {
            return Err(ContextError::NotIngestible(id.clone()));
        }
        if !value.is_finite() {
            return Err(ContextError::NonFiniteValue(id.clone()));
        }
        let value = match (slot.spec.kind, value) {
            (ValueKind::Float, Value::Int(i)) => Value::Float(i as f64),
            (_, v) => v,
        };
        if value.kind() != slot.spec.kind {
            return Err(ContextError::KindMismatch {
                id: id.clone(),
                expected: slot.spec.kind,
                got: value.kind(),
            });
        }
        if let Some(latest) = slot.newest_queued.max(slot.updated_at) {
            if at < latest {
                return Err(ContextError::OutOfOrder {
                    id: id.clone(),
                    at,
                    latest,
                });
            }
        }
        slot.newest_queued = Some(at);
        // Keep the queue sorted by time; stable for equal times.
        let pos = self
            .queue
            .iter()
            .rposition(|e| e.at <= at)
            .map_or(0, |p| p + 1);
        self.queue.insert(
            pos,
            QueuedEvent {
                id: id.clone(),
                value,
                at,
            },
        );
        Ok(())
    }

    /// Number of events waiting for a future snapshot.
    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }

    fn apply(&mut self, event: QueuedEvent) {
        let slot = self
            .slots
            .get_mut(&event.id)
            .expect("queued events reference registered factors");
        slot.updated_at = Some(event.at);
        if slot.spec.mode == Mode::Pulse {
            if event.value == Value::Bool(true) {
                slot.latched = true;
            }
            slot.latest = Some(Value::Bool(false));
        } else {
            slot.latest = Some(event.value);
        }
        let derived: Vec<(FactorId, Option<Value>)> = self
            .derivations
            .iter()
            .filter(|d| d.inputs.contains(&event.id))
            .map(|d| {
                let inputs: Option<Vec<Value>> = d
                    .inputs
                    .iter()
                    .map(|i| self.slots.get(i).and_then(|s| s.latest.clone()))
                    .collect();
                (d.output.clone(), inputs.and_then(|vals| (d.derive)(&vals)))
            })
            .collect();
        for (out, value) in derived {
            if let (Some(slot), Some(value)) = (self.slots.get_mut(&out), value) {
                slot.latest = Some(value);
                slot.updated_at = Some(event.at);
            }
        }
    }

    /// Applies queued events up to `tick_time`, polls pull factors and
    /// returns the resulting immutable snapshot. Pulse latches are cleared.
    pub fn build_snapshot(&mut self, tick_time: Millis) -> Result<ContextSnapshot, ContextError> {
        if let Some(previous) = self.last_tick {
            if tick_time < previous {
                return Err(ContextError::TimeWentBackwards {
                    at: tick_time,
                    previous,
                });
            }
        }
        self.last_tick = Some(tick_time);
        while self.queue.front().is_some_and(|e| e.at <= tick_time) {
            let event = self.queue.pop_front().expect("front exists");
            self.apply(event);
        }
        let mut entries = BTreeMap::new();
        for (id, slot) in self.slots.iter_mut() {
            let entry = match slot.spec.mode {
                Mode::Pull => {
                    let polled = match &mut slot.source {
                        PullSource::None => Err(ProviderError("no provider bound".into())),
                        PullSource::Function(f) => f(tick_time),
                        PullSource::Group {
                            group,
                            method,
                            params,
                        } => group
                            .lock()
                            .expect("context group lock")
                            .execute(method, params, tick_time),
                    };
                    match polled.and_then(|v| check_polled(&slot.spec, v)) {
                        Ok(v) => {
                            slot.latest = Some(v);
                            slot.updated_at = Some(tick_time);
                        }
                        Err(e) => {
                            self.diagnostics
                                .push(format!("t={tick_time}: poll of `{id}` failed: {e}"));
                            slot.latest = None;
                        }
                    }
                    Entry {
                        value: slot.latest.clone(),
                        updated_at: slot.updated_at,
                    }
                }
                Mode::Push => Entry {
                    value: slot.latest.clone(),
                    updated_at: slot.updated_at,
                },
                Mode::Pulse => {
                    let value = slot.latest.as_ref().map(|_| Value::Bool(slot.latched));
                    slot.latched = false;
                    Entry {
                        value,
                        updated_at: slot.updated_at,
                    }
                }
            };
            entries.insert(id.clone(), entry);
        }
        Ok(ContextSnapshot { tick_time, entries })
    }

    /// Provider failures recorded since the last call.
    pub fn take_diagnostics(&mut self) -> Vec<String> {
        std::mem::take(&mut self.diagnostics)
    }
}

fn check_polled(spec: &FactorSpec, v: Value) -> Result<Value, ProviderError> {
    if !v.is_finite() {
        return Err(ProviderError("non-finite value".into()));
    }
    if v.kind() != spec.kind {
        return Err(ProviderError(format!(
            "expected {} value, got {}",
            spec.kind,
            v.kind()
        )));
    }
    Ok(v)
}
