//! Named random streams.
//!
//! Every consumer of randomness derives its own generator from the run seed
//! and a label, so adding a new consumer never shifts the numbers another one
//! sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn fnv1a(label: &str) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for byte in label.bytes() {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Seed of the sub-stream `(seed, label)`.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    // splitmix64 finalizer over the combined words
    let mut z = seed ^ fnv1a(label).rotate_left(17);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, label: &str) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(seed, label))
}
