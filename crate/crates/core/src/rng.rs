//! Seed derivation.
//!
//! Every random stream is a ChaCha8 generator keyed by the master seed and a
//! purpose tag, with the replicate (or draw) index selecting the ChaCha stream.
//! Streams never overlap, so replicates can be evaluated in any order or on any
//! number of threads and still see the same numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Fixed default seed used by the CLI when `--seed` is not given.
pub const DEFAULT_SEED: u64 = 20_160_915;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn tag_hash(tag: &str) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Derives an independent 64-bit seed for `(seed, tag, index)`.
pub fn derive_seed(seed: u64, tag: &str, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ tag_hash(tag)) ^ splitmix64(index.wrapping_add(1)))
}

/// Generator for stream `index` of purpose `tag` under the master `seed`.
pub fn stream_rng(seed: u64, tag: &str, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ tag_hash(tag)));
    rng.set_stream(index);
    rng
}
