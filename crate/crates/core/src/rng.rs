//! Deterministic random streams.
//!
//! Every consumer of randomness derives its generator from a base seed plus a
//! pair of stream coordinates (for example iteration and sample index), so the
//! draws never depend on how work is partitioned across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags keep unrelated consumers of the same seed apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Sample = 2,
    Noise = 3,
    Scene = 4,
    Pca = 5,
    Renormalize = 6,
    Eval = 7,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Returns a generator for `(seed, stream, major, minor)`.
pub fn stream_rng(seed: u64, stream: Stream, major: u64, minor: u64) -> ChaCha8Rng {
    let mut key = splitmix(seed ^ splitmix(stream as u64));
    key = splitmix(key ^ major);
    key = splitmix(key ^ minor.rotate_left(17));
    ChaCha8Rng::seed_from_u64(key)
}
