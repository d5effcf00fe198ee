//! HTTP front end for a single engine.
//!
//! The session starts in stepped mode: ticks happen only on `POST /sim/step`.
//! Live mode runs a wall-clock ticker. Every state change is published on
//! `GET /events` as one JSON line before the request that caused it returns.

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post, put};
use axum::{Json, Router};
use m3i::context::Millis;
use m3i::dsl;
use m3i::engine::EngineError;
use m3i::{Engine, FactorId, Rule, Setting, SettingValue, TriggerRecord, Value};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as JsonValue};
use tokio::sync::broadcast;
use tokio::task::JoinHandle;

pub const DEFAULT_PORT: u16 = 7380;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimMode {
    Live,
    Stepped,
}

struct LiveClock {
    started: Instant,
    base: Millis,
    task: JoinHandle<()>,
}

struct Session {
    engine: Engine,
    live: Option<LiveClock>,
}

impl Session {
    fn mode(&self) -> SimMode {
        if self.live.is_some() {
            SimMode::Live
        } else {
            SimMode::Stepped
        }
    }

    fn live_now(&self) -> Option<Millis> {
        self.live
            .as_ref()
            .map(|l| l.base + l.started.elapsed().as_millis() as Millis)
    }
}

/// Shared handle to the engine and the event channel.
#[derive(Clone)]
pub struct AppState {
    session: Arc<Mutex<Session>>,
    events: broadcast::Sender<String>,
}

impl AppState {
    pub fn new(engine: Engine) -> AppState {
        let (events, _) = broadcast::channel(4096);
        AppState {
            session: Arc::new(Mutex::new(Session { engine, live: None })),
            events,
        }
    }

    fn lock(&self) -> MutexGuard<'_, Session> {
        self.session.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Sends one line to every stream subscriber. Called with the session
    /// lock held so lines keep mutation order.
    fn publish(&self, line: String) {
        let _ = self.events.send(line);
    }

    fn publish_mutation(
        &self,
        s: &Session,
        kind: &str,
        mut body: JsonValue,
        records: &[TriggerRecord],
    ) {
        body["mutation"] = json!(kind);
        body["records"] = json!(records);
        body["device"] = json!(s.engine.device_state());
        self.publish(body.to_string());
    }

    pub fn subscribe(&self) -> broadcast::Receiver<String> {
        self.events.subscribe()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/rules", get(list_rules).post(add_rules))
        .route("/rules/{id}", delete(remove_rule))
        .route("/rules/{id}/enabled", put(set_enabled))
        .route("/catalog", get(catalog))
        .route("/context/events", post(context_event))
        .route("/device", get(device))
        .route("/device/override", post(override_setting))
        .route("/device/override/clear", post(clear_override))
        .route("/sim/step", post(step))
        .route("/sim/mode", get(get_mode).post(set_mode))
        .route("/events", get(events))
        .with_state(state)
}

/// Binds `addr` and serves until the process ends.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: JsonValue,
}

impl ApiError {
    fn new(status: StatusCode, message: impl std::fmt::Display) -> ApiError {
        ApiError {
            status,
            body: json!({ "error": message.to_string() }),
        }
    }

    fn bad(message: impl std::fmt::Display) -> ApiError {
        ApiError::new(StatusCode::BAD_REQUEST, message)
    }

    fn conflict(message: impl std::fmt::Display) -> ApiError {
        ApiError::new(StatusCode::CONFLICT, message)
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> ApiError {
        match e {
            EngineError::UnknownRule(_) => ApiError::new(StatusCode::NOT_FOUND, e),
            EngineError::AlreadyRunning | EngineError::NotRunning => ApiError::conflict(e),
            _ => ApiError::bad(e),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Parses a JSON body ourselves so malformed input gets our error shape.
fn parse_body<T: for<'de> Deserialize<'de>>(body: &str) -> ApiResult<T> {
    serde_json::from_str(body).map_err(|e| ApiError::bad(format!("invalid request body: {e}")))
}

fn raw_json(status: StatusCode, text: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], text).into_response()
}

async fn list_rules(State(st): State<AppState>) -> Json<JsonValue> {
    let s = st.lock();
    Json(JsonValue::Array(
        s.engine.rules().iter().map(Rule::to_json).collect(),
    ))
}

fn rules_from_body(s: &Session, headers: &HeaderMap, body: &str) -> ApiResult<Vec<Rule>> {
    let is_json = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/json"))
        || body.trim_start().starts_with(['{', '[']);
    if is_json {
        let j: JsonValue = parse_body(body)?;
        let items = match j {
            JsonValue::Array(items) => items,
            other => vec![other],
        };
        return items
            .iter()
            .map(|r| Rule::from_json(r).map_err(ApiError::bad))
            .collect();
    }
    let callbacks: Vec<&str> = s.engine.device().callback_ids().collect();
    let fail = |diags: Vec<dsl::Diagnostic>| {
        let first = diags.first().map(ToString::to_string).unwrap_or_default();
        ApiError {
            status: StatusCode::BAD_REQUEST,
            body: json!({ "error": first, "diagnostics": diags }),
        }
    };
    let parsed = dsl::parse(body).map_err(fail)?;
    let diags = dsl::check(
        &parsed.file,
        Some(&parsed.map),
        &s.engine.registry().catalog(),
        &callbacks,
    );
    if !diags.is_empty() {
        return Err(fail(diags));
    }
    Ok(parsed.file.rules)
}

async fn add_rules(
    State(st): State<AppState>,
    headers: HeaderMap,
    body: String,
) -> ApiResult<Response> {
    let mut s = st.lock();
    let rules = rules_from_body(&s, &headers, &body)?;
    if rules.is_empty() {
        return Err(ApiError::bad("no rules in request body"));
    }
    // All or nothing: check every rule, including ids across the batch.
    let mut ids = std::collections::BTreeSet::new();
    for rule in &rules {
        s.engine.check_rule(rule)?;
        for node in rule.nodes() {
            if !ids.insert(node.id.clone()) {
                return Err(ApiError::bad(format!("duplicate rule id `{}`", node.id)));
            }
        }
    }
    let ids: Vec<String> = rules.iter().map(|r| r.id.clone()).collect();
    for rule in rules {
        s.engine.add_rule(rule)?;
    }
    st.publish_mutation(&s, "rules_added", json!({ "ids": ids }), &[]);
    Ok((
        StatusCode::CREATED,
        Json(json!({ "id": ids[0], "ids": ids })),
    )
        .into_response())
}

async fn remove_rule(
    State(st): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<JsonValue>> {
    let mut s = st.lock();
    let records = s.engine.remove_rule(&id)?;
    st.publish_mutation(&s, "rule_removed", json!({ "id": id }), &records);
    Ok(Json(
        json!({ "id": id, "records": records, "device": s.engine.device_state() }),
    ))
}

#[derive(Deserialize)]
struct EnabledBody {
    enabled: bool,
}

async fn set_enabled(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: String,
) -> ApiResult<Json<JsonValue>> {
    let b: EnabledBody = parse_body(&body)?;
    let mut s = st.lock();
    let records = s.engine.set_enabled(&id, b.enabled)?;
    st.publish_mutation(
        &s,
        "rule_enabled",
        json!({ "id": id, "enabled": b.enabled }),
        &records,
    );
    Ok(Json(
        json!({ "id": id, "enabled": b.enabled, "records": records, "device": s.engine.device_state() }),
    ))
}

async fn catalog(State(st): State<AppState>) -> Json<JsonValue> {
    let s = st.lock();
    Json(json!(s.engine.registry().catalog()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EventBody {
    factor: FactorId,
    value: Value,
    t: Option<Millis>,
}

async fn context_event(State(st): State<AppState>, body: String) -> ApiResult<Response> {
    let ev: EventBody = parse_body(&body)?;
    let mut s = st.lock();
    let at = match (s.live_now(), ev.t) {
        (Some(_), Some(_)) => {
            return Err(ApiError::conflict(
                "explicit event times are only accepted in stepped mode",
            ))
        }
        (Some(now), None) => now,
        (None, Some(t)) => t,
        (None, None) => s.engine.last_tick().unwrap_or(0),
    };
    s.engine.ingest(&ev.factor, ev.value.clone(), at)?;
    let line =
        json!({ "mutation": "context_event", "factor": ev.factor, "value": ev.value, "t": at });
    st.publish(line.to_string());
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({ "factor": ev.factor, "t": at })),
    )
        .into_response())
}

#[derive(Deserialize)]
struct DeviceQuery {
    #[serde(default)]
    stacks: bool,
}

/// The device state; with `?stacks=true` also the revert stack per setting.
async fn device(State(st): State<AppState>, Query(q): Query<DeviceQuery>) -> Json<JsonValue> {
    let s = st.lock();
    let state = json!(s.engine.device_state());
    if !q.stacks {
        return Json(state);
    }
    let stacks: BTreeMap<&str, _> = Setting::ALL
        .iter()
        .map(|&k| (k.name(), s.engine.device().stack(k)))
        .collect();
    Json(json!({ "state": state, "stacks": stacks }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OverrideBody {
    setting: Setting,
    value: Option<SettingValue>,
}

async fn override_setting(State(st): State<AppState>, body: String) -> ApiResult<Json<JsonValue>> {
    let b: OverrideBody = parse_body(&body)?;
    let value = b.value.ok_or_else(|| ApiError::bad("missing `value`"))?;
    let mut s = st.lock();
    let record = s.engine.manual_override(b.setting, value)?;
    let records = [record];
    st.publish_mutation(&s, "override", json!({ "setting": b.setting }), &records);
    Ok(Json(
        json!({ "record": records[0], "device": s.engine.device_state() }),
    ))
}

async fn clear_override(State(st): State<AppState>, body: String) -> ApiResult<Json<JsonValue>> {
    let b: OverrideBody = parse_body(&body)?;
    let mut s = st.lock();
    let record = s.engine.clear_override(b.setting);
    let records: Vec<TriggerRecord> = record.iter().cloned().collect();
    st.publish_mutation(
        &s,
        "override_cleared",
        json!({ "setting": b.setting }),
        &records,
    );
    Ok(Json(
        json!({ "record": record, "device": s.engine.device_state() }),
    ))
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct StepBody {
    t: Option<Millis>,
}

/// Runs one tick (at `t`, or one interval after the last tick) and returns
/// its canonical report.
async fn step(State(st): State<AppState>, body: String) -> ApiResult<Response> {
    let b: StepBody = if body.trim().is_empty() {
        StepBody::default()
    } else {
        parse_body(&body)?
    };
    let mut s = st.lock();
    if s.live.is_some() {
        return Err(ApiError::conflict(
            "stepping is only available in stepped mode",
        ));
    }
    let t = b.t.unwrap_or_else(|| s.engine.next_tick_time());
    let line = s.engine.tick(t)?.to_canonical_json();
    st.publish(line.clone());
    Ok(raw_json(StatusCode::OK, line))
}

async fn get_mode(State(st): State<AppState>) -> Json<JsonValue> {
    Json(json!({ "mode": st.lock().mode() }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModeBody {
    mode: SimMode,
}

async fn set_mode(State(st): State<AppState>, body: String) -> ApiResult<Json<JsonValue>> {
    let b: ModeBody = parse_body(&body)?;
    let mut s = st.lock();
    if s.mode() == b.mode {
        return Ok(Json(json!({ "mode": b.mode })));
    }
    match b.mode {
        SimMode::Live => {
            let base = s.engine.next_tick_time();
            s.engine.start(base)?;
            let interval = Duration::from_millis(s.engine.tick_interval());
            let task = tokio::spawn(run_live(st.clone(), interval));
            s.live = Some(LiveClock {
                started: Instant::now(),
                base,
                task,
            });
        }
        SimMode::Stepped => {
            if let Some(live) = s.live.take() {
                live.task.abort();
            }
            s.engine.stop()?;
        }
    }
    st.publish(json!({ "mutation": "mode", "mode": b.mode }).to_string());
    Ok(Json(json!({ "mode": b.mode })))
}

async fn run_live(st: AppState, interval: Duration) {
    let mut timer = tokio::time::interval(interval);
    loop {
        timer.tick().await;
        let mut s = st.lock();
        let Some(now) = s.live_now() else { return };
        match s.engine.advance_to(now) {
            Ok(reports) => {
                for r in reports {
                    st.publish(r.to_canonical_json());
                }
            }
            Err(e) => st.publish(json!({ "error": e.to_string() }).to_string()),
        }
    }
}

/// Line-delimited JSON: tick reports (they carry `tick_time`) and
/// mutation notices (they carry `mutation`).
async fn events(State(st): State<AppState>) -> Response {
    let rx = st.subscribe();
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        let line = match rx.recv().await {
            Ok(line) => line,
            Err(broadcast::error::RecvError::Lagged(n)) => json!({ "lagged": n }).to_string(),
            Err(broadcast::error::RecvError::Closed) => return None,
        };
        Some((Ok::<_, Infallible>(line + "\n"), rx))
    });
    (
        [(header::CONTENT_TYPE, "application/x-ndjson")],
        Body::from_stream(stream),
    )
        .into_response()
}
