//! Rebuilds a [`Trajectory`] from protocol payloads, so episodes played over
//! the wire can be compared with in-process runs.

use envforge_core::episode::{round_reward, EnvId, EpisodeConfig, Observation, Span, StepRecord, Trajectory};
use envforge_core::AugmentSpec;
use serde::Deserialize;
use serde_json::Value;

#[derive(Debug, thiserror::Error)]
pub enum RecorderError {
    #[error("unexpected payload: {0}")]
    Payload(#[from] serde_json::Error),
    #[error("step recorded after the episode ended")]
    Finished,
}

#[derive(Deserialize)]
struct ResetPayload {
    observation: String,
    admissible_actions: Vec<String>,
    injected_spans: Vec<Span>,
    task: String,
    seed: u64,
    config: EpisodeConfig,
}

#[derive(Deserialize)]
struct StepPayload {
    observation: String,
    admissible_actions: Vec<String>,
    injected_spans: Vec<Span>,
    reward: f64,
    done: bool,
    truncated: bool,
    invalid: bool,
    parsed_action: Option<String>,
}

pub struct TrajectoryRecorder {
    env: EnvId,
    seed: u64,
    config: EpisodeConfig,
    augment: Option<AugmentSpec>,
    task: String,
    current: Observation,
    steps: Vec<StepRecord>,
    finished: bool,
}

impl TrajectoryRecorder {
    pub fn from_reset(env: EnvId, augment: Option<AugmentSpec>, payload: &Value) -> Result<Self, RecorderError> {
        let p = ResetPayload::deserialize(payload)?;
        let mut current = Observation::new(p.observation, p.admissible_actions, p.task.clone());
        current.injected_spans = p.injected_spans;
        Ok(Self {
            env,
            seed: p.seed,
            config: p.config,
            augment,
            task: p.task,
            current,
            steps: Vec::new(),
            finished: false,
        })
    }

    /// The observation the agent should answer next.
    pub fn observation(&self) -> &Observation {
        &self.current
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn record_step(&mut self, raw_response: &str, payload: &Value) -> Result<(), RecorderError> {
        if self.finished {
            return Err(RecorderError::Finished);
        }
        let p = StepPayload::deserialize(payload)?;
        let mut next = Observation::new(p.observation, p.admissible_actions, self.task.clone());
        next.injected_spans = p.injected_spans;
        let seen = std::mem::replace(&mut self.current, next);
        self.steps.push(StepRecord {
            t: self.steps.len() as u32 + 1,
            obs: seen.text,
            action_raw: raw_response.to_string(),
            action: p.parsed_action,
            invalid: p.invalid,
            reward: p.reward,
            done: p.done,
            truncated: p.truncated,
            injected_spans: seen.injected_spans,
        });
        self.finished = p.done || p.truncated;
        Ok(())
    }

    pub fn finish(self) -> Trajectory {
        let success = self.steps.last().is_some_and(|s| s.done && s.reward == self.config.success_reward);
        Trajectory {
            env: self.env,
            seed: self.seed,
            config: self.config,
            augment: self.augment,
            success,
            total_reward: round_reward(self.steps.iter().map(|s| s.reward).sum()),
            steps: self.steps,
        }
    }
}
