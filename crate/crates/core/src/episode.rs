//! Episode lifecycle shared by every simulator: configuration, observations,
//! agent-response parsing, the reward contract, and trajectory records.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{maybe_augment, AugmentSpec};
use crate::rng::{self, tags, StreamRng};

/// Environment family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvId {
    Sokoban,
    House,
    Shop,
}

impl EnvId {
    pub const ALL: [EnvId; 3] = [EnvId::Sokoban, EnvId::House, EnvId::Shop];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvId::Sokoban => "sokoban",
            EnvId::House => "house",
            EnvId::Shop => "shop",
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sokoban" => Ok(EnvId::Sokoban),
            "house" => Ok(EnvId::House),
            "shop" => Ok(EnvId::Shop),
            other => Err(format!("unknown env `{other}` (expected sokoban, house, or shop)")),
        }
    }
}

/// Step budget and reward contract for one episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub max_steps: u32,
    pub success_reward: f64,
    pub failure_reward: f64,
    pub invalid_penalty: f64,
    pub thinking_required: bool,
}

impl EpisodeConfig {
    /// Defaults per environment: 15 steps for Sokoban and the shop, 50 for the house.
    pub fn for_env(env: EnvId) -> Self {
        let max_steps = match env {
            EnvId::Sokoban | EnvId::Shop => 15,
            EnvId::House => 50,
        };
        Self { max_steps, success_reward: 10.0, failure_reward: 0.0, invalid_penalty: -0.1, thinking_required: true }
    }

    pub fn validate(&self) -> Result<(), EpisodeError> {
        if self.max_steps < 1 {
            return Err(EpisodeError::InvalidConfig("max_steps must be at least 1".into()));
        }
        if self.success_reward.partial_cmp(&self.failure_reward) != Some(Ordering::Greater) {
            return Err(EpisodeError::InvalidConfig("success_reward must exceed failure_reward".into()));
        }
        if self.invalid_penalty.is_nan() || self.invalid_penalty > 0.0 {
            return Err(EpisodeError::InvalidConfig("invalid_penalty must be <= 0".into()));
        }
        Ok(())
    }
}

/// Half-open byte range `[start, end)` inside an observation's text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

impl From<(usize, usize)> for Span {
    fn from((start, end): (usize, usize)) -> Self {
        Span { start, end }
    }
}

impl From<Span> for (usize, usize) {
    fn from(span: Span) -> Self {
        (span.start, span.end)
    }
}

/// Removes `spans` from `text`. Spans must be sorted, disjoint, and in bounds.
pub fn strip_spans(text: &str, spans: &[Span]) -> String {
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    for span in spans {
        out.push_str(&text[cursor..span.start]);
        cursor = span.end;
    }
    out.push_str(&text[cursor..]);
    out
}

/// True when spans are sorted ascending, pairwise disjoint, and lie on char
/// boundaries inside `text`.
pub fn spans_well_formed(text: &str, spans: &[Span]) -> bool {
    let mut prev_end = 0;
    for span in spans {
        if span.start < prev_end || span.end < span.start || span.end > text.len() {
            return false;
        }
        if !text.is_char_boundary(span.start) || !text.is_char_boundary(span.end) {
            return false;
        }
        prev_end = span.end;
    }
    true
}

/// What the agent is shown at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub text: String,
    pub admissible_actions: Vec<String>,
    pub task: String,
    pub injected_spans: Vec<Span>,
}

impl Observation {
    pub fn new(text: String, admissible_actions: Vec<String>, task: String) -> Self {
        Self { text, admissible_actions, task, injected_spans: Vec::new() }
    }

    /// The observation with every injected span deleted.
    pub fn stripped_text(&self) -> String {
        strip_spans(&self.text, &self.injected_spans)
    }
}

/// Successful parse of an agent response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedResponse {
    pub thinking: Option<String>,
    pub action: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseFailure {
    #[error("no <action>...</action> pair in response")]
    MissingAction,
    #[error("unbalanced {0} tags")]
    Unbalanced(&'static str),
    #[error("action tag is empty")]
    EmptyAction,
    #[error("a <think>...</think> pair must precede the action")]
    MissingThinking,
}

const ACTION_OPEN: &str = "<action>";
const ACTION_CLOSE: &str = "</action>";
const THINK_OPEN: &str = "<think>";
const THINK_CLOSE: &str = "</think>";

/// Finds the first `open ... close` pair in `text`, returning the content range.
fn first_pair(text: &str, open: &str, close: &str, name: &'static str) -> Result<Option<(usize, usize)>, ParseFailure> {
    let Some(start) = text.find(open) else {
        if text.contains(close) {
            return Err(ParseFailure::Unbalanced(name));
        }
        return Ok(None);
    };
    if text[..start].contains(close) {
        return Err(ParseFailure::Unbalanced(name));
    }
    let body_start = start + open.len();
    let Some(rel_end) = text[body_start..].find(close) else {
        return Err(ParseFailure::Unbalanced(name));
    };
    let body_end = body_start + rel_end;
    if text[body_start..body_end].contains(open) {
        return Err(ParseFailure::Unbalanced(name));
    }
    Ok(Some((body_start, body_end)))
}

/// Extracts the first `<action>` pair (trimmed) and, when present before it,
/// the `<think>` content verbatim. Text after the action pair is ignored.
pub fn parse_agent_response(raw: &str, thinking_required: bool) -> Result<ParsedResponse, ParseFailure> {
    let (a_start, a_end) = first_pair(raw, ACTION_OPEN, ACTION_CLOSE, "action")?.ok_or(ParseFailure::MissingAction)?;
    let action = raw[a_start..a_end].trim();
    if action.is_empty() {
        return Err(ParseFailure::EmptyAction);
    }

    let prefix = &raw[..a_start - ACTION_OPEN.len()];
    let thinking = match first_pair(prefix, THINK_OPEN, THINK_CLOSE, "think") {
        Ok(Some((t_start, t_end))) => Some(prefix[t_start..t_end].to_string()),
        Ok(None) if thinking_required => return Err(ParseFailure::MissingThinking),
        Ok(None) => None,
        Err(e) if thinking_required => return Err(e),
        Err(_) => None,
    };

    Ok(ParsedResponse { thinking, action: action.to_string() })
}

/// Result of asking a simulator to apply one parsed action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transition {
    /// Not in the simulator's accepted set; state must be unchanged.
    Rejected,
    Continue,
    /// Goal reached; the episode ends with the success reward.
    Success,
    /// Terminal without success (e.g. buying the wrong product).
    Failure,
}

/// A text environment the episode runner can drive.
pub trait Simulator {
    fn env_id(&self) -> EnvId;

    /// The rendered, unaugmented observation of the current state.
    fn observe(&self) -> Observation;

    /// Injects distractors into `obs`. Must not touch simulator state.
    fn augment(&self, obs: Observation, spec: &AugmentSpec, rng: &mut StreamRng) -> Observation;

    fn transition(&mut self, action: &str) -> Transition;
}

/// One step of a trajectory as persisted on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u32,
    /// Observation text the agent saw before acting (augmented if active).
    pub obs: String,
    pub action_raw: String,
    pub action: Option<String>,
    pub invalid: bool,
    pub reward: f64,
    pub done: bool,
    pub truncated: bool,
    pub injected_spans: Vec<Span>,
}

impl StepRecord {
    /// Action as it appears in history traces; invalid steps render as `Still`.
    pub fn trace_action(&self) -> &str {
        match (&self.action, self.invalid) {
            (Some(action), false) => action,
            _ => "Still",
        }
    }

    pub fn stripped_obs(&self) -> String {
        strip_spans(&self.obs, &self.injected_spans)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub env: EnvId,
    pub seed: u64,
    pub config: EpisodeConfig,
    pub augment: Option<AugmentSpec>,
    pub success: bool,
    pub total_reward: f64,
    pub steps: Vec<StepRecord>,
}

/// Rounds to six decimal places so reward sums serialize stably.
pub fn round_reward(x: f64) -> f64 {
    let r = (x * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

impl Trajectory {
    /// Checks the structural invariants of a finished trajectory.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.steps.len() > self.config.max_steps as usize {
            return Err(format!("{} steps exceed max_steps {}", self.steps.len(), self.config.max_steps));
        }
        for (i, step) in self.steps.iter().enumerate() {
            if step.t as usize != i + 1 {
                return Err(format!("step {i} has t={}", step.t));
            }
            if step.done && step.truncated {
                return Err(format!("step {} is both done and truncated", step.t));
            }
            if step.invalid && step.reward != self.config.invalid_penalty {
                return Err(format!("invalid step {} has reward {}", step.t, step.reward));
            }
            if !spans_well_formed(&step.obs, &step.injected_spans) {
                return Err(format!("step {} has malformed spans", step.t));
            }
        }
        let last_solved = self.steps.last().is_some_and(|s| s.done && s.reward == self.config.success_reward);
        if self.success != last_solved {
            return Err("success flag disagrees with the final step".into());
        }
        let sum = round_reward(self.steps.iter().map(|s| s.reward).sum());
        if (sum - self.total_reward).abs() > 1e-9 {
            return Err(format!("total_reward {} != step sum {}", self.total_reward, sum));
        }
        Ok(())
    }

    pub fn invalid_steps(&self) -> usize {
        self.steps.iter().filter(|s| s.invalid).count()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EpisodeError {
    #[error("episode already terminated")]
    SessionTerminated,
    #[error("invalid episode config: {0}")]
    InvalidConfig(String),
}

/// Single-owner state machine for one episode.
#[derive(Debug, Clone)]
pub struct Episode<S> {
    sim: S,
    seed: u64,
    config: EpisodeConfig,
    augment: Option<AugmentSpec>,
    augment_seed: u64,
    augment_active: bool,
    current: Observation,
    steps: Vec<StepRecord>,
    finished: bool,
}

impl<S: Simulator> Episode<S> {
    /// Starts an episode on a freshly generated simulator. The augmentation
    /// coin is drawn once here and applies to every observation.
    pub fn start(sim: S, seed: u64, config: EpisodeConfig, augment: Option<AugmentSpec>) -> Result<Self, EpisodeError> {
        config.validate()?;
        if let Some(spec) = &augment {
            spec.validate().map_err(|e| EpisodeError::InvalidConfig(e.to_string()))?;
        }
        let augment_seed =
            augment.as_ref().map(|spec| rng::derive_seed(spec.seed, tags::AUGMENT_COIN, seed)).unwrap_or(0);
        let augment_active = match &augment {
            Some(spec) => maybe_augment(spec, &mut rng::seeded(augment_seed)),
            None => false,
        };
        let mut episode = Self {
            sim,
            seed,
            config,
            augment,
            augment_seed,
            augment_active,
            current: Observation::new(String::new(), Vec::new(), String::new()),
            steps: Vec::new(),
            finished: false,
        };
        episode.current = episode.render_observation();
        Ok(episode)
    }

    fn render_observation(&self) -> Observation {
        let obs = self.sim.observe();
        match (&self.augment, self.augment_active) {
            (Some(spec), true) => {
                let index = self.steps.len() as u64;
                let mut obs_rng = rng::stream(self.augment_seed, tags::AUGMENT_OBS, index);
                self.sim.augment(obs, spec, &mut obs_rng)
            }
            _ => obs,
        }
    }

    pub fn observation(&self) -> &Observation {
        &self.current
    }

    pub fn sim(&self) -> &S {
        &self.sim
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn augment_active(&self) -> bool {
        self.augment_active
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn steps(&self) -> &[StepRecord] {
        &self.steps
    }

    /// Parses and applies one raw agent response.
    pub fn apply(&mut self, raw: &str) -> Result<&StepRecord, EpisodeError> {
        if self.finished {
            return Err(EpisodeError::SessionTerminated);
        }
        let t = self.steps.len() as u32 + 1;

        let (action, transition) = match parse_agent_response(raw, self.config.thinking_required) {
            Ok(parsed) => {
                let transition = self.sim.transition(&parsed.action);
                (Some(parsed.action), transition)
            }
            Err(_) => (None, Transition::Rejected),
        };

        let invalid = transition == Transition::Rejected;
        let (reward, done) = match transition {
            Transition::Rejected => (self.config.invalid_penalty, false),
            Transition::Continue => (0.0, false),
            Transition::Success => (self.config.success_reward, true),
            Transition::Failure => (self.config.failure_reward, true),
        };
        let truncated = !done && t >= self.config.max_steps;
        let reward = if truncated && !invalid { self.config.failure_reward } else { reward };

        let seen = std::mem::replace(&mut self.current, Observation::new(String::new(), Vec::new(), String::new()));
        self.steps.push(StepRecord {
            t,
            obs: seen.text,
            action_raw: raw.to_string(),
            action,
            invalid,
            reward,
            done,
            truncated,
            injected_spans: seen.injected_spans,
        });
        self.finished = done || truncated;
        self.current = self.render_observation();
        Ok(self.steps.last().expect("step just pushed"))
    }

    pub fn into_trajectory(self) -> Trajectory {
        let success = self.steps.last().is_some_and(|s| s.done && s.reward == self.config.success_reward);
        let total_reward = round_reward(self.steps.iter().map(|s| s.reward).sum());
        Trajectory {
            env: self.sim.env_id(),
            seed: self.seed,
            config: self.config,
            augment: self.augment,
            success,
            total_reward,
            steps: self.steps,
        }
    }
}
