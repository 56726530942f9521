//! Replica-indexed random streams.
//!
//! Every replica draws from its own ChaCha8 stream: the key is a SplitMix64
//! mix of the base seed and the stream id is the replica index, so stream
//! `k` is fixed by `(base_seed, k)` alone and never depends on which thread
//! or in which order replicas run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ReplicaRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic random stream for replica `replica_index` of a run seeded
/// with `base_seed`.
pub fn rng_stream(base_seed: u64, replica_index: u64) -> ReplicaRng {
    let mut key = [0u8; 32];
    let mut state = base_seed;
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(replica_index);
    rng
}
