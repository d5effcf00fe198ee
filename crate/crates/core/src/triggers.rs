//! Output side: the simulated device, its settable modalities and the
//! triggers that change them.
//!
//! Settings are reversible. Every write goes onto a per-setting stack of
//! `(source, value)` entries above a baseline and the effective value is the
//! top of the stack. Sounds, vibration patterns, messages and method calls
//! are one-shot effects that are recorded but never touch settable fields.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};
use thiserror::Error;

use crate::context::Millis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RingerMode {
    Normal,
    Vibrate,
    Silent,
}

impl RingerMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RingerMode::Normal => "normal",
            RingerMode::Vibrate => "vibrate",
            RingerMode::Silent => "silent",
        }
    }

    pub fn parse(s: &str) -> Option<RingerMode> {
        [RingerMode::Normal, RingerMode::Vibrate, RingerMode::Silent]
            .into_iter()
            .find(|m| m.as_str() == s)
    }
}

/// A settable field of [`DeviceState`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Ringer,
    Vibrating,
    ScreenBrightness,
    NotificationLed,
    WifiEnabled,
    SyncEnabled,
    ScreenLocked,
}

impl Setting {
    pub const ALL: [Setting; 7] = [
        Setting::Ringer,
        Setting::Vibrating,
        Setting::ScreenBrightness,
        Setting::NotificationLed,
        Setting::WifiEnabled,
        Setting::SyncEnabled,
        Setting::ScreenLocked,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Setting::Ringer => "ringer",
            Setting::Vibrating => "vibrating",
            Setting::ScreenBrightness => "screen_brightness",
            Setting::NotificationLed => "notification_led",
            Setting::WifiEnabled => "wifi_enabled",
            Setting::SyncEnabled => "sync_enabled",
            Setting::ScreenLocked => "screen_locked",
        }
    }

    pub fn parse(s: &str) -> Option<Setting> {
        Setting::ALL.into_iter().find(|x| x.name() == s)
    }

    pub fn admits(self, value: &SettingValue) -> bool {
        match (self, value) {
            (Setting::Ringer, SettingValue::Ringer(_)) => true,
            (Setting::ScreenBrightness, SettingValue::Level(l)) => (0.0..=1.0).contains(l),
            (Setting::Ringer | Setting::ScreenBrightness, _) => false,
            (_, SettingValue::Bool(_)) => true,
            _ => false,
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SettingValue {
    Ringer(RingerMode),
    Bool(bool),
    Level(f64),
}

impl fmt::Display for SettingValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SettingValue::Ringer(m) => f.write_str(m.as_str()),
            SettingValue::Bool(b) => write!(f, "{b}"),
            SettingValue::Level(l) => write!(f, "{l:?}"),
        }
    }
}

impl SettingValue {
    fn to_json(self) -> Json {
        serde_json::to_value(self).expect("setting values serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmittedMessage {
    pub time: Millis,
    pub channel: String,
    pub payload: Json,
}

/// Simulated phone settings and recorded one-shot effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceState {
    pub ringer: RingerMode,
    pub vibrating: bool,
    pub screen_brightness: f64,
    pub notification_led: bool,
    pub wifi_enabled: bool,
    pub sync_enabled: bool,
    pub screen_locked: bool,
    pub last_sound_played: Option<String>,
    pub emitted_messages: Vec<EmittedMessage>,
}

impl Default for DeviceState {
    fn default() -> Self {
        DeviceState {
            ringer: RingerMode::Normal,
            vibrating: false,
            screen_brightness: 0.5,
            notification_led: false,
            wifi_enabled: true,
            sync_enabled: true,
            screen_locked: false,
            last_sound_played: None,
            emitted_messages: Vec::new(),
        }
    }
}

impl DeviceState {
    pub fn get(&self, setting: Setting) -> SettingValue {
        match setting {
            Setting::Ringer => SettingValue::Ringer(self.ringer),
            Setting::Vibrating => SettingValue::Bool(self.vibrating),
            Setting::ScreenBrightness => SettingValue::Level(self.screen_brightness),
            Setting::NotificationLed => SettingValue::Bool(self.notification_led),
            Setting::WifiEnabled => SettingValue::Bool(self.wifi_enabled),
            Setting::SyncEnabled => SettingValue::Bool(self.sync_enabled),
            Setting::ScreenLocked => SettingValue::Bool(self.screen_locked),
        }
    }

    fn set(&mut self, setting: Setting, value: SettingValue) {
        match (setting, value) {
            (Setting::Ringer, SettingValue::Ringer(m)) => self.ringer = m,
            (Setting::ScreenBrightness, SettingValue::Level(l)) => self.screen_brightness = l,
            (Setting::Vibrating, SettingValue::Bool(b)) => self.vibrating = b,
            (Setting::NotificationLed, SettingValue::Bool(b)) => self.notification_led = b,
            (Setting::WifiEnabled, SettingValue::Bool(b)) => self.wifi_enabled = b,
            (Setting::SyncEnabled, SettingValue::Bool(b)) => self.sync_enabled = b,
            (Setting::ScreenLocked, SettingValue::Bool(b)) => self.screen_locked = b,
            (s, v) => unreachable!("{v} was validated for {s}"),
        }
    }
}

/// An output action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Trigger {
    /// Reversible write of one setting.
    Set {
        setting: Setting,
        value: SettingValue,
    },
    Play {
        sound: String,
    },
    /// Alternating on/off durations in milliseconds.
    Vibrate {
        pattern: Vec<u32>,
    },
    Emit {
        channel: String,
        payload: Json,
    },
    /// Invokes a callback registered on the device.
    Call {
        callback: String,
    },
    Nothing,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TriggerError {
    #[error("callback `{0}` is not registered")]
    UnknownCallback(String),
    #[error("callback `{0}` is already registered")]
    DuplicateCallback(String),
    #[error("setting `{setting}` cannot take value `{value}`")]
    BadSettingValue {
        setting: Setting,
        value: SettingValue,
    },
    #[error("vibration pattern must be non-empty with entries > 0 ms")]
    BadPattern,
}

impl Trigger {
    pub fn validate(&self) -> Result<(), TriggerError> {
        match self {
            Trigger::Set { setting, value } if !setting.admits(value) => {
                Err(TriggerError::BadSettingValue {
                    setting: *setting,
                    value: *value,
                })
            }
            Trigger::Vibrate { pattern } if pattern.is_empty() || pattern.contains(&0) => {
                Err(TriggerError::BadPattern)
            }
            _ => Ok(()),
        }
    }

    pub fn is_reversible(&self) -> bool {
        matches!(self, Trigger::Set { .. })
    }

    /// The rule-language form of the trigger.
    pub fn describe(&self) -> String {
        match self {
            Trigger::Set { setting, value } => format!("set {setting} = {value}"),
            Trigger::Play { sound } => format!("play {sound}"),
            Trigger::Vibrate { pattern } => {
                let parts: Vec<String> = pattern.iter().map(u32::to_string).collect();
                format!("vibrate [{}]", parts.join(", "))
            }
            Trigger::Emit { channel, payload } => format!("emit {channel} {payload}"),
            Trigger::Call { callback } => format!("call {callback}"),
            Trigger::Nothing => "nothing".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Then,
    Else,
}

/// Who owns a stack entry.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Source {
    Manual,
    Rule { node: String, branch: Branch },
}

impl Source {
    pub fn rule(node: &str, branch: Branch) -> Source {
        Source::Rule {
            node: node.to_string(),
            branch,
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Manual => f.write_str("manual"),
            Source::Rule {
                node,
                branch: Branch::Then,
            } => write!(f, "{node}:then"),
            Source::Rule {
                node,
                branch: Branch::Else,
            } => write!(f, "{node}:else"),
        }
    }
}

impl Serialize for Source {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StackEntry {
    pub source: Source,
    pub value: SettingValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldChange {
    pub field: String,
    pub from: Json,
    pub to: Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Fire,
    Revert,
    Override,
}

/// Audit entry for one device mutation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerRecord {
    pub time: Millis,
    pub kind: RecordKind,
    pub source: String,
    pub action: String,
    pub diff: Vec<FieldChange>,
}

/// What a callback sees when its `call` trigger fires.
#[derive(Debug, Clone, PartialEq)]
pub struct CallbackCall<'a> {
    pub id: &'a str,
    pub time: Millis,
    pub source: &'a Source,
}

pub type Callback = Box<dyn FnMut(&CallbackCall<'_>) + Send>;

/// The simulated device: state, revert stacks and registered callbacks.
pub struct Device {
    state: DeviceState,
    baseline: BTreeMap<Setting, SettingValue>,
    stacks: BTreeMap<Setting, Vec<StackEntry>>,
    callbacks: BTreeMap<String, Callback>,
}

impl Default for Device {
    fn default() -> Self {
        Device::new(DeviceState::default())
    }
}

impl Device {
    pub fn new(initial: DeviceState) -> Device {
        let baseline = Setting::ALL.iter().map(|s| (*s, initial.get(*s))).collect();
        Device {
            state: initial,
            baseline,
            stacks: BTreeMap::new(),
            callbacks: BTreeMap::new(),
        }
    }

    pub fn state(&self) -> &DeviceState {
        &self.state
    }

    pub fn baseline(&self, setting: Setting) -> SettingValue {
        self.baseline[&setting]
    }

    pub fn stack(&self, setting: Setting) -> &[StackEntry] {
        self.stacks.get(&setting).map_or(&[], Vec::as_slice)
    }

    pub fn register_callback(&mut self, id: &str, callback: Callback) -> Result<(), TriggerError> {
        if self.callbacks.contains_key(id) {
            return Err(TriggerError::DuplicateCallback(id.to_string()));
        }
        self.callbacks.insert(id.to_string(), callback);
        Ok(())
    }

    pub fn has_callback(&self, id: &str) -> bool {
        self.callbacks.contains_key(id)
    }

    pub fn callback_ids(&self) -> impl Iterator<Item = &str> {
        self.callbacks.keys().map(String::as_str)
    }

    fn effective(&self, setting: Setting) -> SettingValue {
        self.stack(setting)
            .last()
            .map_or(self.baseline[&setting], |e| e.value)
    }

    /// Re-derives a setting from its stack, returning the change if any.
    fn settle(&mut self, setting: Setting) -> Option<FieldChange> {
        let before = self.state.get(setting);
        let after = self.effective(setting);
        if before == after {
            return None;
        }
        self.state.set(setting, after);
        Some(FieldChange {
            field: setting.name().to_string(),
            from: before.to_json(),
            to: after.to_json(),
        })
    }

    fn push(
        &mut self,
        setting: Setting,
        source: &Source,
        value: SettingValue,
    ) -> Option<FieldChange> {
        let stack = self.stacks.entry(setting).or_default();
        stack.retain(|e| &e.source != source);
        stack.push(StackEntry {
            source: source.clone(),
            value,
        });
        self.settle(setting)
    }

    /// Performs a trigger on behalf of `source`.
    pub fn fire(
        &mut self,
        trigger: &Trigger,
        at: Millis,
        source: &Source,
    ) -> Result<TriggerRecord, TriggerError> {
        trigger.validate()?;
        let mut diff = Vec::new();
        match trigger {
            Trigger::Set { setting, value } => diff.extend(self.push(*setting, source, *value)),
            Trigger::Play { sound } => {
                let from = json!(self.state.last_sound_played);
                self.state.last_sound_played = Some(sound.clone());
                diff.push(FieldChange {
                    field: "last_sound_played".into(),
                    from,
                    to: json!(sound),
                });
            }
            Trigger::Emit { channel, payload } => {
                let message = EmittedMessage {
                    time: at,
                    channel: channel.clone(),
                    payload: payload.clone(),
                };
                diff.push(FieldChange {
                    field: "emitted_messages".into(),
                    from: Json::Null,
                    to: serde_json::to_value(&message).expect("message serializes"),
                });
                self.state.emitted_messages.push(message);
            }
            Trigger::Call { callback } => {
                let f = self
                    .callbacks
                    .get_mut(callback)
                    .ok_or_else(|| TriggerError::UnknownCallback(callback.clone()))?;
                f(&CallbackCall {
                    id: callback,
                    time: at,
                    source,
                });
            }
            Trigger::Vibrate { .. } | Trigger::Nothing => {}
        }
        Ok(TriggerRecord {
            time: at,
            kind: RecordKind::Fire,
            source: source.to_string(),
            action: trigger.describe(),
            diff,
        })
    }

    /// Removes every stack entry owned by `source`. Returns a record when
    /// anything was removed.
    pub fn release(&mut self, source: &Source, at: Millis) -> Option<TriggerRecord> {
        let mut touched = Vec::new();
        for (setting, stack) in self.stacks.iter_mut() {
            let before = stack.len();
            stack.retain(|e| &e.source != source);
            if stack.len() != before {
                touched.push(*setting);
            }
        }
        if touched.is_empty() {
            return None;
        }
        let names: Vec<&str> = touched.iter().map(|s| s.name()).collect();
        let diff = touched.into_iter().filter_map(|s| self.settle(s)).collect();
        Some(TriggerRecord {
            time: at,
            kind: RecordKind::Revert,
            source: source.to_string(),
            action: format!("revert {}", names.join(", ")),
            diff,
        })
    }

    /// Puts a manual entry on top of the setting's stack, replacing any
    /// earlier manual entry.
    pub fn manual_override(
        &mut self,
        setting: Setting,
        value: SettingValue,
        at: Millis,
    ) -> Result<TriggerRecord, TriggerError> {
        if !setting.admits(&value) {
            return Err(TriggerError::BadSettingValue { setting, value });
        }
        let diff = self
            .push(setting, &Source::Manual, value)
            .into_iter()
            .collect();
        Ok(TriggerRecord {
            time: at,
            kind: RecordKind::Override,
            source: Source::Manual.to_string(),
            action: format!("override {setting} = {value}"),
            diff,
        })
    }

    /// Drops the manual entry of a setting, if present.
    pub fn clear_override(&mut self, setting: Setting, at: Millis) -> Option<TriggerRecord> {
        let stack = self.stacks.entry(setting).or_default();
        let before = stack.len();
        stack.retain(|e| e.source != Source::Manual);
        if stack.len() == before {
            return None;
        }
        let diff = self.settle(setting).into_iter().collect();
        Some(TriggerRecord {
            time: at,
            kind: RecordKind::Override,
            source: Source::Manual.to_string(),
            action: format!("clear override {setting}"),
            diff,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    fn ringer(m: RingerMode) -> Trigger {
        Trigger::Set {
            setting: Setting::Ringer,
            value: SettingValue::Ringer(m),
        }
    }

    #[test]
    fn setting_trigger_changes_ringer() {
        let mut d = Device::default();
        let rec = d
            .fire(
                &ringer(RingerMode::Vibrate),
                2000,
                &Source::rule("flip_to_mute", Branch::Then),
            )
            .unwrap();
        assert_eq!(d.state().ringer, RingerMode::Vibrate);
        assert_eq!(rec.action, "set ringer = vibrate");
        assert_eq!(rec.source, "flip_to_mute:then");
        assert_eq!(
            rec.diff,
            vec![FieldChange {
                field: "ringer".into(),
                from: json!("normal"),
                to: json!("vibrate")
            }]
        );
    }

    #[test]
    fn null_trigger_records_without_change() {
        let mut d = Device::default();
        let rec = d
            .fire(&Trigger::Nothing, 0, &Source::rule("r", Branch::Else))
            .unwrap();
        assert!(rec.diff.is_empty());
        assert_eq!(d.state(), &DeviceState::default());
    }

    #[test]
    fn message_trigger_appends() {
        let mut d = Device::default();
        let t = Trigger::Emit {
            channel: "steering".into(),
            payload: json!({"angle": 12.5}),
        };
        d.fire(&t, 300, &Source::rule("steer", Branch::Then))
            .unwrap();
        assert_eq!(
            d.state().emitted_messages,
            vec![EmittedMessage {
                time: 300,
                channel: "steering".into(),
                payload: json!({"angle": 12.5})
            }]
        );
    }

    #[test]
    fn callbacks() {
        let mut d = Device::default();
        let count = Arc::new(AtomicUsize::new(0));
        let c = count.clone();
        d.register_callback(
            "launch.camera",
            Box::new(move |_| {
                c.fetch_add(1, Ordering::SeqCst);
            }),
        )
        .unwrap();
        let src = Source::rule("press_and_shoot", Branch::Then);
        d.fire(
            &Trigger::Call {
                callback: "launch.camera".into(),
            },
            0,
            &src,
        )
        .unwrap();
        assert_eq!(count.load(Ordering::SeqCst), 1);
        assert_eq!(
            d.fire(
                &Trigger::Call {
                    callback: "nope".into()
                },
                0,
                &src
            ),
            Err(TriggerError::UnknownCallback("nope".into()))
        );
        assert_eq!(
            d.register_callback("launch.camera", Box::new(|_| {})),
            Err(TriggerError::DuplicateCallback("launch.camera".into()))
        );
    }

    #[test]
    fn malformed_triggers() {
        let mut d = Device::default();
        let src = Source::Manual;
        assert_eq!(
            d.fire(
                &Trigger::Vibrate {
                    pattern: vec![100, 0]
                },
                0,
                &src
            ),
            Err(TriggerError::BadPattern)
        );
        let bright = Trigger::Set {
            setting: Setting::ScreenBrightness,
            value: SettingValue::Level(1.5),
        };
        assert!(matches!(
            d.fire(&bright, 0, &src),
            Err(TriggerError::BadSettingValue { .. })
        ));
        let wrong = Trigger::Set {
            setting: Setting::Ringer,
            value: SettingValue::Bool(true),
        };
        assert!(d.fire(&wrong, 0, &src).is_err());
    }

    #[test]
    fn manual_override_survives_rule_release() {
        let mut d = Device::default();
        let mute = Source::rule("mute", Branch::Then);
        d.fire(&ringer(RingerMode::Vibrate), 0, &mute).unwrap();
        d.manual_override(
            Setting::Ringer,
            SettingValue::Ringer(RingerMode::Silent),
            10,
        )
        .unwrap();
        assert_eq!(d.state().ringer, RingerMode::Silent);
        let rec = d.release(&mute, 20).unwrap();
        assert!(rec.diff.is_empty());
        assert_eq!(d.state().ringer, RingerMode::Silent);
        d.clear_override(Setting::Ringer, 30).unwrap();
        assert_eq!(d.state().ringer, RingerMode::Normal);
        assert!(d.clear_override(Setting::Ringer, 40).is_none());
    }

    #[test]
    fn release_restores_value_beneath() {
        let mut d = Device::default();
        let a = Source::rule("a", Branch::Then);
        let b = Source::rule("b", Branch::Then);
        d.fire(&ringer(RingerMode::Vibrate), 0, &a).unwrap();
        d.fire(&ringer(RingerMode::Silent), 0, &b).unwrap();
        d.release(&b, 1).unwrap();
        assert_eq!(d.state().ringer, RingerMode::Vibrate);
        d.release(&a, 2).unwrap();
        assert_eq!(d.state().ringer, RingerMode::Normal);
        assert!(d.release(&a, 3).is_none());
    }

    #[test]
    fn trigger_json() {
        let j = serde_json::to_string(&ringer(RingerMode::Vibrate)).unwrap();
        assert_eq!(j, r#"{"type":"set","setting":"ringer","value":"vibrate"}"#);
        let b: Trigger =
            serde_json::from_str(r#"{"type":"set","setting":"screen_brightness","value":0.25}"#)
                .unwrap();
        assert_eq!(
            b,
            Trigger::Set {
                setting: Setting::ScreenBrightness,
                value: SettingValue::Level(0.25)
            }
        );
        assert_eq!(
            serde_json::to_string(&Trigger::Nothing).unwrap(),
            r#"{"type":"nothing"}"#
        );
    }

    fn arb_state() -> impl Strategy<Value = DeviceState> {
        (
            prop_oneof![
                Just(RingerMode::Normal),
                Just(RingerMode::Vibrate),
                Just(RingerMode::Silent)
            ],
            any::<[bool; 6]>(),
            0.0f64..=1.0,
        )
            .prop_map(|(ringer, b, brightness)| DeviceState {
                ringer,
                vibrating: b[0],
                screen_brightness: brightness,
                notification_led: b[1],
                wifi_enabled: b[2],
                sync_enabled: b[3],
                screen_locked: b[4],
                last_sound_played: b[5].then(|| "chime".to_string()),
                emitted_messages: Vec::new(),
            })
    }

    proptest! {
        #[test]
        fn null_trigger_is_identity(state in arb_state()) {
            let mut d = Device::new(state.clone());
            d.fire(&Trigger::Nothing, 5, &Source::Manual).unwrap();
            prop_assert_eq!(d.state(), &state);
        }

        #[test]
        fn one_shots_leave_settings_alone(state in arb_state(), which in 0usize..3) {
            let mut d = Device::new(state.clone());
            d.register_callback("cb", Box::new(|_| {})).unwrap();
            let t = match which {
                0 => Trigger::Play { sound: "beep".into() },
                1 => Trigger::Vibrate { pattern: vec![100, 50, 100] },
                _ => Trigger::Call { callback: "cb".into() },
            };
            d.fire(&t, 1, &Source::Manual).unwrap();
            for s in Setting::ALL {
                prop_assert_eq!(d.state().get(s), state.get(s));
            }
        }
    }
}
