//! Context-driven multimodal rule engine.
//!
//! Context factors ([`context`]) feed logical expressions ([`expressions`]);
//! rules wire expressions to triggers ([`triggers`]) and a tick-based
//! evaluator ([`engine`]) switches the modalities of a simulated device.
//! Rules can be written as text ([`dsl`]) and replayed against recorded
//! context traces ([`scenario`]).

pub mod context;
pub mod dsl;
pub mod engine;
pub mod expressions;
pub mod scenario;
pub mod triggers;
pub mod values;

pub use context::{Catalog, ContextSnapshot, FactorId, FactorSpec, Millis, Mode, Registry};
pub use engine::{Action, Engine, EngineError, Rule, TickReport};
pub use expressions::{Connective, Expr, Statement};
pub use triggers::{
    Device, DeviceState, RecordKind, RingerMode, Setting, SettingValue, Trigger, TriggerRecord,
};
pub use values::{GeoPoint, Operator, Pattern, Truth, Value, ValueKind};
