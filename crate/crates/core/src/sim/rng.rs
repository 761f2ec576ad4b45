//! Per-replication random streams.
//!
//! Every replication owns a family of ChaCha streams keyed by
//! `(master_seed, replication, sub)`, so results do not depend on the order
//! or thread in which replications run.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub const TRAIN: u64 = 0;
pub const TEST: u64 = 1;
/// Stream for simulation parameters.
pub const PARAMS: u64 = 0xFFFF;

/// Extra test environments use sub-streams `2, 3, ...`.
pub fn environment(e: usize) -> u64 {
    2 + e as u64
}

pub fn stream(master_seed: u64, replication: u64, sub: u64) -> ChaCha12Rng {
    assert!(sub <= 0xFFFF, "sub-stream index out of range");
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream((replication << 16) | sub);
    rng
}
