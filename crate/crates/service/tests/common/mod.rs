#![allow(dead_code)]

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::path::PathBuf;
use std::process::{Command, Stdio};

use envforge_core::episode::{EnvId, Episode, EpisodeConfig, Trajectory};
use envforge_core::rollout::{self, Policy, PolicyKind, PolicySpec, Scripted};
use envforge_core::world::World;
use envforge_core::AugmentSpec;
use envforge_service::protocol::request_line;
use envforge_service::{Server, ServerConfig, TrajectoryRecorder};
use rand::seq::SliceRandom;
use serde_json::{json, Value};

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// One scripted episode recorded per environment.
#[derive(Debug, Clone, Copy)]
pub struct Script {
    pub env: EnvId,
    pub seed: u64,
    pub augment: Option<AugmentSpec>,
    pub policy: PolicyKind,
}

pub fn scripts() -> [Script; 3] {
    [
        Script {
            env: EnvId::Sokoban,
            seed: 7,
            augment: Some(AugmentSpec::new(80.0, 1.0, 3)),
            policy: PolicyKind::SokobanBfs,
        },
        Script { env: EnvId::House, seed: 3, augment: None, policy: PolicyKind::HouseGreedy },
        Script {
            env: EnvId::Shop,
            seed: 5,
            augment: Some(AugmentSpec { epsilon: 100.0, prob: 1.0, alpha: 0.5, seed: 2 }),
            policy: PolicyKind::ShopGreedy,
        },
    ]
}

pub const INVALID_RESPONSE: &str = "I move right.";

/// Raw responses for the script: one untagged reply, then the scripted
/// policy until the episode ends. Also returns the in-process trajectory.
pub fn scripted_responses(s: &Script) -> (Vec<String>, Trajectory) {
    let config = EpisodeConfig::for_env(s.env);
    let world = World::generate(s.env, s.seed, &config).unwrap();
    let mut ep = Episode::start(world, s.seed, config, s.augment).unwrap();
    let mut policy = Scripted::new(PolicySpec::new(s.policy), s.seed);
    let mut out = vec![INVALID_RESPONSE.to_string()];
    ep.apply(INVALID_RESPONSE).unwrap();
    while !ep.is_finished() {
        let raw = policy.respond(ep.sim(), ep.observation()).unwrap();
        ep.apply(&raw).unwrap();
        out.push(raw);
    }
    (out, ep.into_trajectory())
}

fn reset_args(env: EnvId, seed: u64, augment: Option<AugmentSpec>) -> Value {
    json!({ "env": env, "seed": seed, "augment": augment, "thinking": true })
}

/// The request lines of a golden transcript.
pub fn golden_requests(s: &Script) -> Vec<String> {
    let (responses, _) = scripted_responses(s);
    let mut id = 0;
    let mut next = || {
        id += 1;
        id
    };
    let mut lines = vec![request_line(next(), "spec", Value::Null)];
    lines.push(request_line(next(), "reset", reset_args(s.env, s.seed, s.augment)));
    for r in &responses {
        lines.push(request_line(next(), "step", json!({ "session": "s1", "response": r })));
    }
    lines.push(request_line(next(), "step", json!({ "session": "s1", "response": "<action>up</action>" })));
    lines.push(request_line(next(), "step", json!({ "session": "s9", "response": "<action>up</action>" })));
    lines.push(r#"{"id": 99, "op": "step", "session": "#.to_string());
    lines.push(request_line(next(), "dance", Value::Null));
    lines.push(request_line(next(), "reset", json!({ "env": "mars", "seed": 1 })));
    lines.push(request_line(next(), "close", json!({ "session": "s1" })));
    lines.push(request_line(next(), "close", json!({ "session": "s1" })));
    lines
}

pub fn replay_in_process(lines: &[String]) -> String {
    let server = Server::new(ServerConfig::default());
    let mut out = String::new();
    for l in lines {
        out.push_str(&server.handle_line(l));
        out.push('\n');
    }
    out
}

/// Pipes `input` through `envforge serve --transport stdio`.
pub fn replay_binary(input: &str) -> String {
    let mut child = Command::new(env!("CARGO_BIN_EXE_envforge"))
        .args(["serve", "--transport", "stdio"])
        .env_remove("ENVFORGE_SEED")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .expect("spawn envforge");
    let mut stdin = child.stdin.take().unwrap();
    let input = input.to_string();
    let writer = std::thread::spawn(move || stdin.write_all(input.as_bytes()).unwrap());
    let output = child.wait_with_output().unwrap();
    writer.join().unwrap();
    assert!(output.status.success());
    String::from_utf8(output.stdout).unwrap()
}

/// Reads the stored transcript for `env`, regenerating it first when
/// `ENVFORGE_BLESS=1`.
pub fn load_golden(s: &Script) -> (String, String) {
    let dir = golden_dir();
    let req_path = dir.join(format!("{}.requests.jsonl", s.env));
    let resp_path = dir.join(format!("{}.responses.jsonl", s.env));
    if std::env::var("ENVFORGE_BLESS").as_deref() == Ok("1") {
        std::fs::create_dir_all(&dir).unwrap();
        let lines = golden_requests(s);
        let mut req = lines.join("\n");
        req.push('\n');
        std::fs::write(&req_path, req).unwrap();
        std::fs::write(&resp_path, replay_in_process(&lines)).unwrap();
    }
    let req = std::fs::read_to_string(&req_path)
        .unwrap_or_else(|e| panic!("{}: {e}; run with ENVFORGE_BLESS=1 to record", req_path.display()));
    let resp = std::fs::read_to_string(&resp_path).unwrap();
    (req, resp)
}

/// Rebuilds the scripted trajectory from a stored response transcript.
pub fn trajectory_from_transcript(s: &Script, requests: &str, responses: &str) -> Trajectory {
    let mut rec: Option<TrajectoryRecorder> = None;
    for (req, resp) in requests.lines().zip(responses.lines()) {
        let (Ok(req), Ok(resp)) = (serde_json::from_str::<Value>(req), serde_json::from_str::<Value>(resp)) else {
            continue;
        };
        if resp["ok"] != json!(true) {
            continue;
        }
        match req["op"].as_str() {
            Some("reset") => rec = Some(TrajectoryRecorder::from_reset(s.env, s.augment, &resp["payload"]).unwrap()),
            Some("step") => {
                rec.as_mut().unwrap().record_step(req["response"].as_str().unwrap(), &resp["payload"]).unwrap()
            }
            _ => {}
        }
    }
    rec.unwrap().finish()
}

/// A session driven by an observation-only scripted policy.
#[derive(Debug, Clone, Copy)]
pub struct SessionPlan {
    pub env: EnvId,
    pub seed: u64,
    pub augment: Option<AugmentSpec>,
    pub policy: PolicyKind,
}

pub fn sixteen_plans() -> Vec<SessionPlan> {
    (0..16u64)
        .map(|i| {
            let env = EnvId::ALL[i as usize % 3];
            let policy = if env == EnvId::Sokoban && i % 2 == 0 {
                PolicyKind::SokobanBfsText
            } else {
                PolicyKind::UniformRandom
            };
            let augment = (i % 4 != 0).then(|| AugmentSpec::new(40.0 * i as f64, 0.5, 100 + i));
            SessionPlan { env, seed: rollout::episode_seed(2024, i), augment, policy }
        })
        .collect()
}

/// Reference trajectory run entirely in process.
pub fn in_process(p: &SessionPlan) -> Trajectory {
    rollout::run_episode(p.env, p.seed, EpisodeConfig::for_env(p.env), p.augment, PolicySpec::new(p.policy)).unwrap()
}

struct Driver {
    policy: Scripted,
    session: String,
    recorder: TrajectoryRecorder,
}

fn call(send: &mut dyn FnMut(&str) -> String, line: String) -> Value {
    let v: Value = serde_json::from_str(&send(&line)).unwrap();
    assert_eq!(v["ok"], json!(true), "{line} -> {v}");
    v["payload"].clone()
}

fn open(send: &mut dyn FnMut(&str) -> String, plan: SessionPlan, id: u64) -> Driver {
    let payload = call(send, request_line(id, "reset", reset_args(plan.env, plan.seed, plan.augment)));
    Driver {
        policy: Scripted::new(PolicySpec::new(plan.policy), plan.seed),
        session: payload["session"].as_str().unwrap().to_string(),
        recorder: TrajectoryRecorder::from_reset(plan.env, plan.augment, &payload).unwrap(),
    }
}

fn advance(send: &mut dyn FnMut(&str) -> String, d: &mut Driver, id: u64) {
    let raw = d.policy.respond_to_observation(d.recorder.observation()).unwrap();
    let payload = call(send, request_line(id, "step", json!({ "session": d.session, "response": raw })));
    d.recorder.record_step(&raw, &payload).unwrap();
}

/// Plays each plan to completion, one session after another.
pub fn play_serial(send: &mut dyn FnMut(&str) -> String, plans: &[SessionPlan]) -> Vec<Trajectory> {
    let mut id = 0;
    plans
        .iter()
        .map(|&p| {
            id += 1;
            let mut d = open(send, p, id);
            while !d.recorder.is_finished() {
                id += 1;
                advance(send, &mut d, id);
            }
            d.recorder.finish()
        })
        .collect()
}

/// Opens every session first, then steps them in a shuffled order.
pub fn play_interleaved(
    send: &mut dyn FnMut(&str) -> String,
    plans: &[SessionPlan],
    order_seed: u64,
) -> Vec<Trajectory> {
    let mut id = 0;
    let mut drivers: Vec<Driver> = plans
        .iter()
        .map(|&p| {
            id += 1;
            open(send, p, id)
        })
        .collect();
    let mut rng = envforge_core::rng::seeded(order_seed);
    loop {
        let mut live: Vec<usize> = (0..drivers.len()).filter(|&i| !drivers[i].recorder.is_finished()).collect();
        if live.is_empty() {
            break;
        }
        live.shuffle(&mut rng);
        for i in live {
            id += 1;
            advance(send, &mut drivers[i], id);
        }
    }
    drivers.into_iter().map(|d| d.recorder.finish()).collect()
}

/// Line-oriented TCP client.
pub struct TcpClient {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl TcpClient {
    pub fn connect(addr: &str) -> Self {
        let stream = TcpStream::connect(addr).unwrap();
        stream.set_nodelay(true).unwrap();
        Self { reader: BufReader::new(stream.try_clone().unwrap()), writer: stream }
    }

    pub fn send(&mut self, line: &str) -> String {
        self.writer.write_all(line.as_bytes()).unwrap();
        self.writer.write_all(b"\n").unwrap();
        let mut resp = String::new();
        self.reader.read_line(&mut resp).unwrap();
        resp.trim_end().to_string()
    }
}
