//! Counter-based seed derivation.
//!
//! Every random stream in an experiment is addressed by a path of small
//! integers (scenario, planner, episode, step, purpose). The seed of a stream
//! depends only on the master seed and that path, never on scheduling, so
//! results do not change with the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream purposes used inside an episode.
pub mod purpose {
    pub const WORLD: u64 = 1;
    pub const PLANNER: u64 = 2;
    pub const FILTER: u64 = 3;
    pub const START: u64 = 4;
    pub const TABLE: u64 = 5;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |acc, &k| {
        splitmix64(acc ^ splitmix64(k.wrapping_add(0x632B_E59B_D9B4_E019)))
    })
}

pub fn stream(master: u64, path: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, path))
}

/// Hash a label into a path component (FNV-1a), for string-keyed streams.
pub fn label(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}
