//! Seed derivation.
//!
//! Every random stage draws from its own `ChaCha8Rng` whose seed is derived
//! from a parent seed and a path of stream ids, so results never depend on
//! the order in which trials are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StageRng = ChaCha8Rng;

/// Stream ids for the stages of one simulated trial.
pub mod stage {
    pub const GRAPH: u64 = 1;
    pub const TRUTH: u64 = 2;
    pub const ANSWERS: u64 = 3;
    pub const ESTIMATOR: u64 = 4;
    pub const SUBSAMPLE: u64 = 5;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `parent` and a path of stream ids.
pub fn derive_seed(parent: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(parent), |acc, &id| splitmix64(acc ^ splitmix64(id.wrapping_add(0x5851_F42D_4C95_7F2D))))
}

pub fn rng_from_seed(seed: u64) -> StageRng {
    ChaCha8Rng::seed_from_u64(seed)
}
