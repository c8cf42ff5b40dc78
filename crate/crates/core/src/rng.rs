//! Counter-based random streams.
//!
//! Every Monte-Carlo draw of the scheme is addressed by
//! `(seed, iteration, node, j)`. The first three pick a ChaCha8 stream (the
//! 64-bit stream id packs `iteration` in the high 32 bits and the node index
//! in the low 32 bits); `j` is the position of the sample inside that stream.
//! Since a node is always processed by a single task, the output does not
//! depend on how nodes are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Stream for sample block `(iteration, node)` under `seed`.
pub fn substream(seed: u64, iteration: u32, node: u32) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((iteration as u64) << 32) | node as u64);
    rng
}

/// Independent auxiliary stream (lambda estimation, self-tests, ...).
///
/// Uses a key derived from `seed` and `tag`, so it never collides with the
/// scheme's substreams for the same seed.
pub fn tagged_stream(seed: u64, tag: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(tag.wrapping_add(0x5eed))))
}

/// Seed for the `index`-th point of a sweep. Index 0 keeps the base seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    if index == 0 {
        base
    } else {
        splitmix64(base.wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15)))
    }
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
