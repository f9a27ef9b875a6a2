//! Seed derivation and stream splitting.
//!
//! Every random decision in the toolkit draws from a `ChaCha8Rng` whose seed
//! is derived from a parent seed, a stream tag, and an index:
//!
//! ```text
//! child = splitmix64(splitmix64(parent ^ fnv1a(tag)) ^ index)
//! ```
//!
//! Episodes get one substream each (`derive_seed(suite_seed, "episode", k)`),
//! and the augmenter takes one substream per episode for the application coin
//! and one per observation for distractor content. Substreams never share
//! state, so episodes can be evaluated in any order or in parallel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream tags used across the crate.
pub mod tags {
    pub const EPISODE: &str = "episode";
    pub const POLICY: &str = "policy";
    pub const AUGMENT_COIN: &str = "augment-coin";
    pub const AUGMENT_OBS: &str = "augment-obs";
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3))
}

/// Pure child-seed function; see the module docs for the exact rule.
pub fn derive_seed(parent: u64, tag: &str, index: u64) -> u64 {
    splitmix64(splitmix64(parent ^ fnv1a(tag)) ^ index)
}

pub fn stream(parent: u64, tag: &str, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(parent, tag, index))
}

pub fn seeded(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}
