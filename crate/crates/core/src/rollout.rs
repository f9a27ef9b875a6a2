//! Episode runner: environments, augmentation, scripted policies, and
//! trajectory persistence.
//!
//! Episode `k` of a suite runs at seed `derive_seed(suite_seed, "episode", k)`
//! and owns every random stream it uses, so episodes can run in any order or
//! in parallel without changing a byte of output.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::AugmentSpec;
use crate::episode::{EnvId, Episode, EpisodeConfig, EpisodeError, Observation, Trajectory};
use crate::metrics::{self, MetricsError, Summary};
use crate::rng::{self, tags, StreamRng};
use crate::sokoban::{Dir, SokobanState};
use crate::world::{World, WorldError};

#[derive(Debug, Error)]
pub enum RolloutError {
    #[error("policy failure: {0}")]
    PolicyFailure(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Shortest plan from the ground-truth grid.
    SokobanBfs,
    /// Shortest plan from the grid parsed back out of the observation text.
    SokobanBfsText,
    SokobanRandom,
    HouseGreedy,
    ShopGreedy,
    /// Uniform choice from the admissible-action list.
    UniformRandom,
    /// Supplied by an external caller; see [`run_episode_with`].
    Remote,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 7] = [
        PolicyKind::SokobanBfs,
        PolicyKind::SokobanBfsText,
        PolicyKind::SokobanRandom,
        PolicyKind::HouseGreedy,
        PolicyKind::ShopGreedy,
        PolicyKind::UniformRandom,
        PolicyKind::Remote,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::SokobanBfs => "sokoban_bfs",
            PolicyKind::SokobanBfsText => "sokoban_bfs_text",
            PolicyKind::SokobanRandom => "sokoban_random",
            PolicyKind::HouseGreedy => "house_greedy",
            PolicyKind::ShopGreedy => "shop_greedy",
            PolicyKind::UniformRandom => "uniform_random",
            PolicyKind::Remote => "remote",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| format!("unknown policy `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub emits_thinking: bool,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind) -> Self {
        Self { kind, emits_thinking: true }
    }
}

/// Wraps an action in the response tags the episode parser expects.
pub fn format_response(action: &str, thinking: Option<&str>) -> String {
    match thinking {
        Some(t) => format!("<think>{t}</think><action>{action}</action>"),
        None => format!("<action>{action}</action>"),
    }
}

/// Produces one raw response per step.
pub trait Policy {
    fn respond(&mut self, world: &World, obs: &Observation) -> Result<String, RolloutError>;
}

/// A built-in scripted policy with its own random stream.
pub struct Scripted {
    spec: PolicySpec,
    rng: StreamRng,
}

impl Scripted {
    pub fn new(spec: PolicySpec, episode_seed: u64) -> Self {
        Self { spec, rng: rng::stream(episode_seed, tags::POLICY, 0) }
    }

    fn wrong_env(&self, world: &World) -> RolloutError {
        RolloutError::PolicyFailure(format!("{} cannot drive a {} episode", self.spec.kind, world_env(world)))
    }

    fn choose(&mut self, world: &World, obs: &Observation) -> Result<(String, String), RolloutError> {
        let kind = self.spec.kind;
        match (kind, world) {
            (PolicyKind::SokobanBfs, World::Sokoban(env)) => bfs_step(&env.state),
            (PolicyKind::SokobanBfsText, World::Sokoban(_)) => {
                let state = SokobanState::parse_render(&obs.text)
                    .map_err(|e| RolloutError::PolicyFailure(format!("cannot read grid: {e}")))?;
                bfs_step(&state)
            }
            (PolicyKind::SokobanRandom, World::Sokoban(_)) => {
                let d = *Dir::ALL.choose(&mut self.rng).expect("four directions");
                Ok((d.as_str().to_string(), "trying a random direction".to_string()))
            }
            (PolicyKind::HouseGreedy, World::House(env)) => env
                .state
                .greedy_action()
                .map(|a| (a, "working toward the task".to_string()))
                .ok_or_else(|| RolloutError::PolicyFailure("no remaining task objects".into())),
            (PolicyKind::ShopGreedy, World::Shop(env)) => {
                Ok((env.greedy_action(), "narrowing down to a matching product".to_string()))
            }
            (PolicyKind::UniformRandom, _) => obs
                .admissible_actions
                .choose(&mut self.rng)
                .map(|a| (a.clone(), "picking an admissible action".to_string()))
                .ok_or_else(|| RolloutError::PolicyFailure("empty admissible list".into())),
            (PolicyKind::Remote, _) => {
                Err(RolloutError::PolicyFailure("remote policies must be supplied by the caller".into()))
            }
            _ => Err(self.wrong_env(world)),
        }
    }
}

impl Scripted {
    /// Responds from the observation alone, for callers that only see the
    /// wire protocol. Only policies that never read ground truth qualify.
    pub fn respond_to_observation(&mut self, obs: &Observation) -> Result<String, RolloutError> {
        let (action, why) = match self.spec.kind {
            PolicyKind::UniformRandom => obs
                .admissible_actions
                .choose(&mut self.rng)
                .map(|a| (a.clone(), "picking an admissible action".to_string()))
                .ok_or_else(|| RolloutError::PolicyFailure("empty admissible list".into()))?,
            PolicyKind::SokobanRandom => {
                let d = *Dir::ALL.choose(&mut self.rng).expect("four directions");
                (d.as_str().to_string(), "trying a random direction".to_string())
            }
            PolicyKind::SokobanBfsText => {
                let state = SokobanState::parse_render(&obs.text)
                    .map_err(|e| RolloutError::PolicyFailure(format!("cannot read grid: {e}")))?;
                bfs_step(&state)?
            }
            other => return Err(RolloutError::PolicyFailure(format!("{other} needs ground-truth state"))),
        };
        Ok(format_response(&action, self.spec.emits_thinking.then_some(why.as_str())))
    }
}

fn world_env(world: &World) -> EnvId {
    use crate::episode::Simulator;
    world.env_id()
}

fn bfs_step(state: &SokobanState) -> Result<(String, String), RolloutError> {
    let plan = state.solve_bfs().ok_or_else(|| RolloutError::PolicyFailure("box cannot reach the goal".into()))?;
    let first = plan.first().ok_or_else(|| RolloutError::PolicyFailure("already solved".into()))?;
    Ok((first.as_str().to_string(), format!("{} moves remain on the shortest plan", plan.len())))
}

impl Policy for Scripted {
    fn respond(&mut self, world: &World, obs: &Observation) -> Result<String, RolloutError> {
        let (action, why) = self.choose(world, obs)?;
        Ok(format_response(&action, self.spec.emits_thinking.then_some(why.as_str())))
    }
}

/// Runs one episode with a built-in policy.
pub fn run_episode(
    env: EnvId,
    seed: u64,
    config: EpisodeConfig,
    augment: Option<AugmentSpec>,
    policy: PolicySpec,
) -> Result<Trajectory, RolloutError> {
    run_episode_with(env, seed, config, augment, &mut Scripted::new(policy, seed))
}

/// Runs one episode driven by any [`Policy`].
pub fn run_episode_with(
    env: EnvId,
    seed: u64,
    config: EpisodeConfig,
    augment: Option<AugmentSpec>,
    policy: &mut dyn Policy,
) -> Result<Trajectory, RolloutError> {
    let world = World::generate(env, seed, &config)?;
    let mut episode = Episode::start(world, seed, config, augment)?;
    while !episode.is_finished() {
        let raw = policy.respond(episode.sim(), episode.observation())?;
        episode.apply(&raw)?;
    }
    Ok(episode.into_trajectory())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSpec {
    pub env: EnvId,
    pub episodes: usize,
    pub suite_seed: u64,
    pub config: EpisodeConfig,
    pub augment: Option<AugmentSpec>,
    pub policy: PolicySpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub trajectories: Vec<Trajectory>,
    pub summary: Summary,
}

pub fn episode_seed(suite_seed: u64, k: u64) -> u64 {
    rng::derive_seed(suite_seed, tags::EPISODE, k)
}

/// Runs `episodes` episodes in parallel; output order is episode order.
pub fn run_suite(spec: &SuiteSpec) -> Result<SuiteResult, RolloutError> {
    if spec.episodes == 0 {
        return Err(MetricsError::EmptyInput.into());
    }
    let trajectories = (0..spec.episodes as u64)
        .into_par_iter()
        .map(|k| run_episode(spec.env, episode_seed(spec.suite_seed, k), spec.config, spec.augment, spec.policy))
        .collect::<Result<Vec<_>, _>>()?;
    let summary = metrics::summarize(&trajectories, spec.config.max_steps)?;
    Ok(SuiteResult { trajectories, summary })
}

/// One JSON object per trajectory, LF-terminated.
pub fn write_jsonl<W: Write>(mut out: W, trajectories: &[Trajectory]) -> Result<(), RolloutError> {
    for t in trajectories {
        serde_json::to_writer(&mut out, t).map_err(|source| RolloutError::Json { line: 0, source })?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<Trajectory>, RolloutError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| RolloutError::Json { line: i + 1, source })?);
    }
    Ok(out)
}
