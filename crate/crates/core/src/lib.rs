//! Deterministic text environments for agent training and evaluation.
//!
//! Three simulators (Sokoban, a household world, and a web shop) share one
//! episode runner and reward contract. Observations can be padded with
//! goal-irrelevant distractor text that never reaches the transition
//! function. The crate also carries the evaluation arithmetic used to compare
//! cross-domain runs and the group-relative policy-gradient objective.

pub mod augment;
pub mod episode;
pub mod grpo;
pub mod house;
pub mod metrics;
pub mod rng;
pub mod rollout;
pub mod shop;
pub mod sokoban;
pub mod world;

pub use augment::AugmentSpec;
pub use episode::{
    parse_agent_response, EnvId, Episode, EpisodeConfig, EpisodeError, Observation, ParseFailure, Simulator, Span,
    StepRecord, Trajectory, Transition,
};
pub use rollout::{PolicyKind, PolicySpec};
pub use world::World;
