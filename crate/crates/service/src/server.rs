//! Session registry and request dispatch.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use envforge_core::episode::{EnvId, Episode, EpisodeConfig, Observation};
use envforge_core::world::World;
use envforge_core::AugmentSpec;
use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::protocol::{
    self, encode, error_response, ok_response, ErrorCode, ProtocolError, Request, DEFAULT_MAX_SESSIONS, OPS,
    PROTOCOL_VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServerConfig {
    pub max_sessions: usize,
    /// Seed used by `reset` requests that do not name one.
    pub default_seed: u64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self { max_sessions: DEFAULT_MAX_SESSIONS, default_seed: 0 }
    }
}

/// Partial episode config accepted by `reset`.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub max_steps: Option<u32>,
    pub success_reward: Option<f64>,
    pub failure_reward: Option<f64>,
    pub invalid_penalty: Option<f64>,
}

impl ConfigOverrides {
    pub fn apply(&self, mut base: EpisodeConfig) -> EpisodeConfig {
        base.max_steps = self.max_steps.unwrap_or(base.max_steps);
        base.success_reward = self.success_reward.unwrap_or(base.success_reward);
        base.failure_reward = self.failure_reward.unwrap_or(base.failure_reward);
        base.invalid_penalty = self.invalid_penalty.unwrap_or(base.invalid_penalty);
        base
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResetArgs {
    env: String,
    seed: Option<u64>,
    #[serde(default)]
    config: ConfigOverrides,
    #[serde(default)]
    augment: Option<AugmentSpec>,
    #[serde(default = "thinking_default")]
    thinking: bool,
}

fn thinking_default() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StepArgs {
    session: String,
    response: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CloseArgs {
    session: String,
}

type Session = Arc<Mutex<Episode<World>>>;

/// Shared by every transport connection. Requests for different sessions
/// may run concurrently; each session is locked for the duration of a step.
pub struct Server {
    config: ServerConfig,
    sessions: Mutex<BTreeMap<String, Session>>,
    next_id: AtomicU64,
}

fn observation_fields(obs: &Observation) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("observation".into(), json!(obs.text));
    m.insert("admissible_actions".into(), json!(obs.admissible_actions));
    m.insert("injected_spans".into(), json!(obs.injected_spans));
    m
}

fn args<T: for<'de> Deserialize<'de>>(map: Map<String, Value>, code: ErrorCode) -> Result<T, ProtocolError> {
    serde_json::from_value(Value::Object(map)).map_err(|e| ProtocolError::new(code, e.to_string()))
}

impl Server {
    pub fn new(config: ServerConfig) -> Self {
        Self { config, sessions: Mutex::new(BTreeMap::new()), next_id: AtomicU64::new(1) }
    }

    pub fn config(&self) -> ServerConfig {
        self.config
    }

    pub fn live_sessions(&self) -> usize {
        self.sessions.lock().expect("session registry poisoned").len()
    }

    /// Handles one request line and returns one response line.
    pub fn handle_line(&self, line: &str) -> String {
        let response = match protocol::parse_request(line) {
            Ok(req) => {
                let id = req.id.clone();
                match self.dispatch(req) {
                    Ok(payload) => ok_response(&id, payload),
                    Err(e) => error_response(&id, &e),
                }
            }
            Err((id, e)) => error_response(&id, &e),
        };
        encode(&response)
    }

    fn dispatch(&self, req: Request) -> Result<Value, ProtocolError> {
        match req.op.as_str() {
            "spec" => Ok(self.spec()),
            "reset" => self.reset(args(req.args, ErrorCode::BadConfig)?),
            "step" => self.step(args(req.args, ErrorCode::BadRequest)?),
            "close" => self.close(args(req.args, ErrorCode::BadRequest)?),
            other => Err(ProtocolError::new(ErrorCode::BadRequest, format!("unknown op `{other}`"))),
        }
    }

    fn spec(&self) -> Value {
        let envs: Vec<Value> =
            EnvId::ALL.iter().map(|&e| json!({ "env": e.as_str(), "config": EpisodeConfig::for_env(e) })).collect();
        json!({
            "protocol_version": PROTOCOL_VERSION,
            "server": format!("envforge {}", env!("CARGO_PKG_VERSION")),
            "envs": envs,
            "ops": OPS,
            "error_codes": ErrorCode::ALL.iter().map(|c| c.as_str()).collect::<Vec<_>>(),
            "max_sessions": self.config.max_sessions,
        })
    }

    fn reset(&self, a: ResetArgs) -> Result<Value, ProtocolError> {
        let bad = |m: String| ProtocolError::new(ErrorCode::BadConfig, m);
        let env: EnvId = a.env.parse().map_err(bad)?;
        let mut config = a.config.apply(EpisodeConfig::for_env(env));
        config.thinking_required = a.thinking;
        config.validate().map_err(|e| bad(e.to_string()))?;
        if let Some(spec) = &a.augment {
            spec.validate().map_err(|e| bad(e.to_string()))?;
        }
        let seed = a.seed.unwrap_or(self.config.default_seed);
        let world = World::generate(env, seed, &config).map_err(|e| bad(e.to_string()))?;
        let episode = Episode::start(world, seed, config, a.augment).map_err(|e| bad(e.to_string()))?;

        let mut payload = observation_fields(episode.observation());
        payload.insert("task".into(), json!(episode.observation().task));
        payload.insert("seed".into(), json!(seed));
        payload.insert("config".into(), json!(config));

        let mut sessions = self.sessions.lock().expect("session registry poisoned");
        if sessions.len() >= self.config.max_sessions {
            return Err(ProtocolError::new(
                ErrorCode::Busy,
                format!("{} sessions open; close one first", sessions.len()),
            ));
        }
        let name = format!("s{}", self.next_id.fetch_add(1, Ordering::Relaxed));
        sessions.insert(name.clone(), Arc::new(Mutex::new(episode)));
        payload.insert("session".into(), json!(name));
        Ok(Value::Object(payload))
    }

    fn lookup(&self, name: &str) -> Result<Session, ProtocolError> {
        self.sessions
            .lock()
            .expect("session registry poisoned")
            .get(name)
            .cloned()
            .ok_or_else(|| ProtocolError::new(ErrorCode::UnknownSession, format!("no session `{name}`")))
    }

    fn step(&self, a: StepArgs) -> Result<Value, ProtocolError> {
        let session = self.lookup(&a.session)?;
        let mut episode = session.lock().expect("session poisoned");
        let record = episode
            .apply(&a.response)
            .map_err(|e| ProtocolError::new(ErrorCode::SessionTerminated, format!("{}: {e}", a.session)))?
            .clone();
        let mut payload = observation_fields(episode.observation());
        payload.insert("reward".into(), json!(record.reward));
        payload.insert("done".into(), json!(record.done));
        payload.insert("truncated".into(), json!(record.truncated));
        payload.insert("invalid".into(), json!(record.invalid));
        payload.insert("parsed_action".into(), json!(record.action));
        Ok(Value::Object(payload))
    }

    fn close(&self, a: CloseArgs) -> Result<Value, ProtocolError> {
        self.sessions
            .lock()
            .expect("session registry poisoned")
            .remove(&a.session)
            .map(|_| json!({ "session": a.session, "closed": true }))
            .ok_or_else(|| ProtocolError::new(ErrorCode::UnknownSession, format!("no session `{}`", a.session)))
    }
}
