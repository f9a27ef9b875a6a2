//! One simulator type covering every environment family.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::AugmentSpec;
use crate::episode::{EnvId, EpisodeConfig, Observation, Simulator, Transition};
use crate::house::{self, HouseEnv, HouseError, HouseParams};
use crate::rng::StreamRng;
use crate::shop::{self, ShopEnv, ShopError};
use crate::sokoban::{self, GenerateParams, SokobanEnv, SokobanError};

pub const SHOP_CATALOG_SIZE: usize = 50;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error(transparent)]
    Sokoban(#[from] SokobanError),
    #[error(transparent)]
    House(#[from] HouseError),
    #[error(transparent)]
    Shop(#[from] ShopError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "env", rename_all = "lowercase")]
pub enum World {
    Sokoban(SokobanEnv),
    House(HouseEnv),
    Shop(ShopEnv),
}

impl World {
    /// Default instance for `env` at `seed`. Sokoban instances are limited to
    /// plans that fit in the step budget.
    pub fn generate(env: EnvId, seed: u64, config: &EpisodeConfig) -> Result<Self, WorldError> {
        Ok(match env {
            EnvId::Sokoban => {
                let params = GenerateParams { max_plan_len: Some(config.max_steps as usize), ..Default::default() };
                World::Sokoban(SokobanEnv::new(sokoban::generate_with(seed, params)?))
            }
            EnvId::House => World::House(HouseEnv::new(house::generate(seed, HouseParams::default())?)),
            EnvId::Shop => World::Shop(ShopEnv::new(Arc::new(shop::generate_catalog(seed, SHOP_CATALOG_SIZE)?))),
        })
    }

    fn sim(&self) -> &dyn Simulator {
        match self {
            World::Sokoban(s) => s,
            World::House(s) => s,
            World::Shop(s) => s,
        }
    }

    fn sim_mut(&mut self) -> &mut dyn Simulator {
        match self {
            World::Sokoban(s) => s,
            World::House(s) => s,
            World::Shop(s) => s,
        }
    }

    /// Canonical JSON of the ground-truth state, for equality checks.
    pub fn state_json(&self) -> String {
        serde_json::to_string(self).expect("world state serializes")
    }
}

impl Simulator for World {
    fn env_id(&self) -> EnvId {
        self.sim().env_id()
    }

    fn observe(&self) -> Observation {
        self.sim().observe()
    }

    fn augment(&self, obs: Observation, spec: &AugmentSpec, rng: &mut StreamRng) -> Observation {
        self.sim().augment(obs, spec, rng)
    }

    fn transition(&mut self, action: &str) -> Transition {
        self.sim_mut().transition(action)
    }
}
