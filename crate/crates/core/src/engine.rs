//! Rules and the tick-driven evaluator.
//!
//! Each rule node remembers the truth of its expression from the previous
//! tick. Trigger leaves fire on edges only: a rising edge activates the
//! then-branch, a falling edge releases the then-branch's setting entries and
//! fires the else-branch once. Nested rules are evaluated on every tick their
//! parent branch is selected and keep their own edge state; deselecting a
//! branch deactivates its whole subtree.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Value as Json};
use thiserror::Error;

use crate::context::{Catalog, ClockOrigin, ContextError, FactorId, Millis, Registry};
use crate::expressions::{validate, Expr};
use crate::triggers::{
    Branch, Callback, Device, DeviceState, Setting, SettingValue, Source, Trigger, TriggerError,
    TriggerRecord,
};
use crate::values::{Truth, Value};

pub const DEFAULT_MAX_DEPTH: usize = 16;

/// Callback ids available in every standard engine.
pub const STANDARD_CALLBACKS: [&str; 3] = ["launch.camera", "launch.maps", "launch.phone"];

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Trigger(Trigger),
    Rule(Box<Rule>),
}

impl Action {
    pub fn nothing() -> Action {
        Action::Trigger(Trigger::Nothing)
    }
}

impl From<Trigger> for Action {
    fn from(t: Trigger) -> Self {
        Action::Trigger(t)
    }
}

impl From<Rule> for Action {
    fn from(r: Rule) -> Self {
        Action::Rule(Box::new(r))
    }
}

/// An expression with an action for each outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub id: String,
    pub when: Expr,
    pub then: Action,
    pub otherwise: Action,
    pub enabled: bool,
}

impl Rule {
    pub fn new(
        id: &str,
        when: Expr,
        then: impl Into<Action>,
        otherwise: impl Into<Action>,
    ) -> Rule {
        Rule {
            id: id.to_string(),
            when,
            then: then.into(),
            otherwise: otherwise.into(),
            enabled: true,
        }
    }

    fn action(&self, branch: Branch) -> &Action {
        match branch {
            Branch::Then => &self.then,
            Branch::Else => &self.otherwise,
        }
    }

    /// Number of rule nodes on the longest nesting chain (1 for a flat rule).
    pub fn depth(&self) -> usize {
        1 + [&self.then, &self.otherwise]
            .iter()
            .map(|a| match a {
                Action::Rule(r) => r.depth(),
                Action::Trigger(_) => 0,
            })
            .max()
            .unwrap_or(0)
    }

    /// This rule and every nested rule, depth first.
    pub fn nodes(&self) -> Vec<&Rule> {
        let mut out = vec![self];
        for a in [&self.then, &self.otherwise] {
            if let Action::Rule(r) = a {
                out.extend(r.nodes());
            }
        }
        out
    }

    pub fn to_json(&self) -> Json {
        json!({
            "id": self.id,
            "enabled": self.enabled,
            "when": self.when,
            "then": action_to_json(&self.then),
            "else": action_to_json(&self.otherwise),
        })
    }

    pub fn from_json(j: &Json) -> Result<Rule, String> {
        let id = j
            .get("id")
            .and_then(Json::as_str)
            .ok_or("rule needs a string `id`")?;
        let when = Expr::from_json(j.get("when").ok_or("rule needs `when`")?)
            .map_err(|e| e.to_string())?;
        let then = action_from_json(j.get("then").ok_or("rule needs `then`")?)?;
        let otherwise = match j.get("else") {
            Some(a) => action_from_json(a)?,
            None => Action::nothing(),
        };
        let enabled = match j.get("enabled") {
            None => true,
            Some(Json::Bool(b)) => *b,
            Some(_) => return Err("`enabled` must be a boolean".into()),
        };
        Ok(Rule {
            id: id.to_string(),
            when,
            then,
            otherwise,
            enabled,
        })
    }
}

fn action_to_json(a: &Action) -> Json {
    match a {
        Action::Trigger(t) => serde_json::to_value(t).expect("triggers serialize"),
        Action::Rule(r) => json!({"type": "rule", "rule": r.to_json()}),
    }
}

fn action_from_json(j: &Json) -> Result<Action, String> {
    if j.get("type").and_then(Json::as_str) == Some("rule") {
        let inner = j.get("rule").ok_or("nested rule action needs `rule`")?;
        return Ok(Action::Rule(Box::new(Rule::from_json(inner)?)));
    }
    serde_json::from_value::<Trigger>(j.clone())
        .map(Action::Trigger)
        .map_err(|e| e.to_string())
}

impl Serialize for Rule {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        // Field order: id, enabled, when, then, else.
        use serde::ser::SerializeMap;
        let mut m = s.serialize_map(Some(5))?;
        m.serialize_entry("id", &self.id)?;
        m.serialize_entry("enabled", &self.enabled)?;
        m.serialize_entry("when", &self.when)?;
        m.serialize_entry("then", &action_to_json(&self.then))?;
        m.serialize_entry("else", &action_to_json(&self.otherwise))?;
        m.end()
    }
}

impl<'de> Deserialize<'de> for Rule {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let j = Json::deserialize(d)?;
        Rule::from_json(&j).map_err(serde::de::Error::custom)
    }
}

pub fn valid_rule_id(id: &str) -> bool {
    let mut chars = id.chars();
    matches!(chars.next(), Some('a'..='z'))
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("rule `{0}` already exists")]
    DuplicateRule(String),
    #[error("unknown rule `{0}`")]
    UnknownRule(String),
    #[error("rule id `{0}` must match [a-z][a-z0-9_]*")]
    InvalidRuleId(String),
    #[error("rule `{id}` nests {depth} levels deep, the limit is {max}")]
    MaxDepthExceeded {
        id: String,
        depth: usize,
        max: usize,
    },
    #[error("rule `{id}` is invalid: {message}")]
    InvalidRule { id: String, message: String },
    #[error(transparent)]
    Trigger(#[from] TriggerError),
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error("tick interval must be positive")]
    InvalidInterval,
    #[error("engine is already running")]
    AlreadyRunning,
    #[error("engine is not running")]
    NotRunning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleOutcome {
    pub id: String,
    pub truth: Truth,
}

/// Result of one evaluation pass. Serializes to the canonical timeline line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickReport {
    pub tick_time: Millis,
    pub snapshot_digest: String,
    pub rules: Vec<RuleOutcome>,
    pub fired: Vec<TriggerRecord>,
    pub device: DeviceState,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

impl TickReport {
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("tick reports serialize")
    }
}

#[derive(Debug, Clone, Copy)]
struct Schedule {
    running: bool,
    next_due: Millis,
}

/// The evaluator: rules, context registry, device and per-node edge state.
pub struct Engine {
    tick_interval: Millis,
    max_depth: usize,
    rules: Vec<Rule>,
    registry: Registry,
    device: Device,
    /// Last definite (or first) truth per rule node; absent = unevaluated.
    last: BTreeMap<String, Truth>,
    schedule: Schedule,
    last_tick: Option<Millis>,
}

#[derive(Default)]
struct Pass {
    outcomes: Vec<RuleOutcome>,
    fired: Vec<TriggerRecord>,
    diagnostics: Vec<String>,
}

impl Engine {
    pub fn new(
        tick_interval: Millis,
        registry: Registry,
        device: Device,
    ) -> Result<Engine, EngineError> {
        if tick_interval == 0 {
            return Err(EngineError::InvalidInterval);
        }
        Ok(Engine {
            tick_interval,
            max_depth: DEFAULT_MAX_DEPTH,
            rules: Vec::new(),
            registry,
            device,
            last: BTreeMap::new(),
            schedule: Schedule {
                running: false,
                next_due: 0,
            },
            last_tick: None,
        })
    }

    /// An engine over `catalog` with the standard simulated clock and the
    /// standard app-launch callbacks registered as no-ops.
    pub fn standard(
        tick_interval: Millis,
        catalog: &Catalog,
        origin: ClockOrigin,
    ) -> Result<Engine, EngineError> {
        let registry = Registry::from_catalog(catalog, origin)?;
        let mut device = Device::default();
        for id in STANDARD_CALLBACKS {
            device.register_callback(id, Box::new(|_| {}))?;
        }
        Engine::new(tick_interval, registry, device)
    }

    pub fn with_max_depth(mut self, max_depth: usize) -> Engine {
        self.max_depth = max_depth;
        self
    }

    pub fn tick_interval(&self) -> Millis {
        self.tick_interval
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn rule(&self, id: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.id == id)
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn device_state(&self) -> &DeviceState {
        self.device.state()
    }

    pub fn last_tick(&self) -> Option<Millis> {
        self.last_tick
    }

    /// Time of the next scheduled tick when ticking on the simulated clock.
    pub fn next_tick_time(&self) -> Millis {
        self.last_tick.map_or(0, |t| t + self.tick_interval)
    }

    pub fn register_callback(&mut self, id: &str, callback: Callback) -> Result<(), EngineError> {
        Ok(self.device.register_callback(id, callback)?)
    }

    pub fn ingest(&mut self, id: &FactorId, value: Value, at: Millis) -> Result<(), EngineError> {
        Ok(self.registry.ingest_event(id, value, at)?)
    }

    /// Checks a rule against this engine without adding it.
    pub fn check_rule(&self, rule: &Rule) -> Result<(), EngineError> {
        let depth = rule.depth();
        if depth > self.max_depth {
            return Err(EngineError::MaxDepthExceeded {
                id: rule.id.clone(),
                depth,
                max: self.max_depth,
            });
        }
        let existing: BTreeSet<&str> = self
            .rules
            .iter()
            .flat_map(|r| r.nodes())
            .map(|n| n.id.as_str())
            .collect();
        let mut seen = BTreeSet::new();
        let catalog = self.registry.catalog();
        for node in rule.nodes() {
            if !valid_rule_id(&node.id) {
                return Err(EngineError::InvalidRuleId(node.id.clone()));
            }
            if existing.contains(node.id.as_str()) || !seen.insert(node.id.as_str()) {
                return Err(EngineError::DuplicateRule(node.id.clone()));
            }
            let issues = validate(&node.when, &catalog);
            if !issues.is_empty() {
                let message = issues
                    .iter()
                    .map(|i| format!("{} at {}", i.message, i.path))
                    .collect::<Vec<_>>();
                return Err(EngineError::InvalidRule {
                    id: node.id.clone(),
                    message: message.join("; "),
                });
            }
            for action in [&node.then, &node.otherwise] {
                if let Action::Trigger(t) = action {
                    t.validate()?;
                    if let Trigger::Call { callback } = t {
                        if !self.device.has_callback(callback) {
                            return Err(TriggerError::UnknownCallback(callback.clone()).into());
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Appends a rule to the evaluation order.
    pub fn add_rule(&mut self, rule: Rule) -> Result<(), EngineError> {
        self.check_rule(&rule)?;
        self.rules.push(rule);
        Ok(())
    }

    /// Removes a rule, reverting every setting entry its nodes own.
    pub fn remove_rule(&mut self, id: &str) -> Result<Vec<TriggerRecord>, EngineError> {
        let idx = self
            .rules
            .iter()
            .position(|r| r.id == id)
            .ok_or_else(|| EngineError::UnknownRule(id.into()))?;
        let rule = self.rules.remove(idx);
        let mut records = Vec::new();
        self.deactivate(&rule, self.now(), &mut records);
        Ok(records)
    }

    /// Enables or disables a rule. Disabling deactivates it like removal.
    pub fn set_enabled(
        &mut self,
        id: &str,
        enabled: bool,
    ) -> Result<Vec<TriggerRecord>, EngineError> {
        let idx = self
            .rules
            .iter()
            .position(|r| r.id == id)
            .ok_or_else(|| EngineError::UnknownRule(id.into()))?;
        let mut records = Vec::new();
        if self.rules[idx].enabled && !enabled {
            let rule = self.rules[idx].clone();
            self.deactivate(&rule, self.now(), &mut records);
        }
        self.rules[idx].enabled = enabled;
        Ok(records)
    }

    fn now(&self) -> Millis {
        self.last_tick.unwrap_or(0)
    }

    pub fn manual_override(
        &mut self,
        setting: Setting,
        value: SettingValue,
    ) -> Result<TriggerRecord, EngineError> {
        let at = self.now();
        Ok(self.device.manual_override(setting, value, at)?)
    }

    pub fn clear_override(&mut self, setting: Setting) -> Option<TriggerRecord> {
        let at = self.now();
        self.device.clear_override(setting, at)
    }

    /// One evaluation pass at `now`: snapshot, rules in insertion order,
    /// actions in encounter order.
    pub fn tick(&mut self, now: Millis) -> Result<TickReport, EngineError> {
        let snapshot = self.registry.build_snapshot(now)?;
        self.last_tick = Some(now);
        let mut pass = Pass {
            diagnostics: self.registry.take_diagnostics(),
            ..Pass::default()
        };
        let rules = std::mem::take(&mut self.rules);
        for rule in rules.iter().filter(|r| r.enabled) {
            self.evaluate(rule, &snapshot, 1, &mut pass);
        }
        self.rules = rules;
        Ok(TickReport {
            tick_time: now,
            snapshot_digest: snapshot.digest(),
            rules: pass.outcomes,
            fired: pass.fired,
            device: self.device.state().clone(),
            diagnostics: pass.diagnostics,
        })
    }

    fn evaluate(
        &mut self,
        rule: &Rule,
        snap: &crate::context::ContextSnapshot,
        depth: usize,
        pass: &mut Pass,
    ) {
        let now = snap.tick_time();
        let truth = match rule.when.eval(snap) {
            Ok(t) => t,
            Err(e) => {
                pass.diagnostics.push(format!("rule `{}`: {e}", rule.id));
                Truth::Unknown
            }
        };
        pass.outcomes.push(RuleOutcome {
            id: rule.id.clone(),
            truth,
        });
        let prev = self.last.get(&rule.id).copied();
        match (truth, prev) {
            (Truth::Unknown, None) => {
                self.last.insert(rule.id.clone(), Truth::Unknown);
            }
            (Truth::Unknown, Some(_)) => {}
            (Truth::True, Some(Truth::True)) => {
                self.continue_branch(rule, Branch::Then, snap, depth, pass)
            }
            (Truth::True, _) => {
                self.deactivate_branch(rule, Branch::Else, now, &mut pass.fired);
                self.last.insert(rule.id.clone(), Truth::True);
                self.enter_branch(rule, Branch::Then, snap, depth, pass);
            }
            (Truth::False, Some(Truth::True)) => {
                self.deactivate_branch(rule, Branch::Then, now, &mut pass.fired);
                self.last.insert(rule.id.clone(), Truth::False);
                self.enter_branch(rule, Branch::Else, snap, depth, pass);
            }
            (Truth::False, Some(Truth::False)) => {
                self.continue_branch(rule, Branch::Else, snap, depth, pass)
            }
            (Truth::False, _) => {
                // First definite evaluation: no else trigger at startup, but
                // a nested else-rule is selected.
                self.last.insert(rule.id.clone(), Truth::False);
                self.continue_branch(rule, Branch::Else, snap, depth, pass);
            }
        }
    }

    fn enter_branch(
        &mut self,
        rule: &Rule,
        branch: Branch,
        snap: &crate::context::ContextSnapshot,
        depth: usize,
        pass: &mut Pass,
    ) {
        match rule.action(branch) {
            Action::Trigger(t) => {
                let source = Source::rule(&rule.id, branch);
                match self.device.fire(t, snap.tick_time(), &source) {
                    Ok(record) => pass.fired.push(record),
                    Err(e) => pass.diagnostics.push(format!("rule `{}`: {e}", rule.id)),
                }
            }
            Action::Rule(child) => self.evaluate(child, snap, depth + 1, pass),
        }
    }

    /// Level semantics: a selected nested rule is re-evaluated every tick.
    fn continue_branch(
        &mut self,
        rule: &Rule,
        branch: Branch,
        snap: &crate::context::ContextSnapshot,
        depth: usize,
        pass: &mut Pass,
    ) {
        if let Action::Rule(child) = rule.action(branch) {
            self.evaluate(child, snap, depth + 1, pass);
        }
    }

    fn deactivate_branch(
        &mut self,
        rule: &Rule,
        branch: Branch,
        at: Millis,
        out: &mut Vec<TriggerRecord>,
    ) {
        out.extend(self.device.release(&Source::rule(&rule.id, branch), at));
        if let Action::Rule(child) = rule.action(branch) {
            self.deactivate(child, at, out);
        }
    }

    /// Releases both branches of a node and its subtree and forgets their
    /// edge state.
    fn deactivate(&mut self, rule: &Rule, at: Millis, out: &mut Vec<TriggerRecord>) {
        self.deactivate_branch(rule, Branch::Then, at, out);
        self.deactivate_branch(rule, Branch::Else, at, out);
        self.last.remove(&rule.id);
    }

    /// Last recorded truth of a rule node (`None` = unevaluated).
    pub fn node_truth(&self, id: &str) -> Option<Truth> {
        self.last.get(id).copied()
    }

    pub fn is_running(&self) -> bool {
        self.schedule.running
    }

    /// Starts periodic ticking at `now` on the simulated clock; the first
    /// tick is due immediately.
    pub fn start(&mut self, now: Millis) -> Result<(), EngineError> {
        if self.schedule.running {
            return Err(EngineError::AlreadyRunning);
        }
        self.schedule = Schedule {
            running: true,
            next_due: now,
        };
        Ok(())
    }

    pub fn stop(&mut self) -> Result<(), EngineError> {
        if !self.schedule.running {
            return Err(EngineError::NotRunning);
        }
        self.schedule.running = false;
        Ok(())
    }

    /// Advances the simulated clock to `now`, running every tick scheduled
    /// at `start + k * interval <= now`.
    pub fn advance_to(&mut self, now: Millis) -> Result<Vec<TickReport>, EngineError> {
        let mut reports = Vec::new();
        while self.schedule.running && self.schedule.next_due <= now {
            let due = self.schedule.next_due;
            reports.push(self.tick(due)?);
            self.schedule.next_due = due + self.tick_interval;
        }
        Ok(reports)
    }
}
