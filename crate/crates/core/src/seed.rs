//! Deterministic seed streams.
//!
//! Every random draw in the library is made from a `ChaCha8Rng` keyed by a
//! seed derived here, so a run is reproducible from its top-level seed no
//! matter how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named sub-streams. Distinct streams never share RNG state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    ActorInit = 1,
    CriticInit = 2,
    ExpertEpisode = 3,
    ExpertNoise = 4,
    RolloutEpisode = 5,
    RolloutNoise = 6,
    BcShuffle = 7,
    CriticShuffle = 8,
    FinetuneEnv = 9,
    FinetuneNoise = 10,
    FinetuneShuffle = 11,
    Evaluation = 12,
    Calibration = 13,
    Split = 14,
    EnvReset = 15,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed for item `index` of `stream` under `base`.
pub fn derive(base: u64, stream: Stream, index: u64) -> u64 {
    splitmix(splitmix(splitmix(base) ^ stream as u64) ^ index)
}

pub fn rng(base: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(base, stream, index))
}
