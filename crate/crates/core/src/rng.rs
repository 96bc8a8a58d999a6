//! Seed handling. Every random stage owns a ChaCha stream derived from one root seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StageRng = ChaCha8Rng;

/// Pipeline stages that consume randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Generate,
    RandomWalk,
    Train,
    Fit,
    Analyze,
}

impl Stage {
    fn tag(self) -> u64 {
        match self {
            Stage::Generate => 0x67656e,
            Stage::RandomWalk => 0x72776b,
            Stage::Train => 0x74726e,
            Stage::Fit => 0x666974,
            Stage::Analyze => 0x616e6c,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent seed for `stage` from the root seed.
pub fn stage_seed(root: u64, stage: Stage) -> u64 {
    splitmix64(root ^ splitmix64(stage.tag()))
}

/// Derives a seed for a numbered sub-stream (restart, worker, trial).
pub fn sub_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed.wrapping_add(splitmix64(index.wrapping_add(1))))
}

pub fn rng(seed: u64) -> StageRng {
    ChaCha8Rng::seed_from_u64(seed)
}
