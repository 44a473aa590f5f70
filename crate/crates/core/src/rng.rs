//! Seed derivation for isolated, reproducible random streams.
//!
//! Every consumer of randomness (weight init, shuffling, dropout masks) gets its
//! own ChaCha stream keyed by a seed derived from the run seed and a purpose
//! path. Streams never share state, so results do not depend on call order
//! across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream tags, mixed into derived seeds so distinct purposes never collide.
pub mod tag {
    pub const INIT: u64 = 0x1417;
    pub const SHUFFLE: u64 = 0x5aff;
    pub const DROPOUT: u64 = 0xd409;
    pub const CANDIDATE: u64 = 0xca4d;
    pub const DATA: u64 = 0xda7a;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `parts` into `seed`.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(seed: u64, parts: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(seed, parts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn distinct_paths_give_distinct_seeds() {
        let a = derive_seed(7, &[tag::INIT, 0]);
        let b = derive_seed(7, &[tag::INIT, 1]);
        let c = derive_seed(7, &[tag::SHUFFLE, 0]);
        let d = derive_seed(8, &[tag::INIT, 0]);
        assert!(a != b && a != c && a != d && b != c);
        assert_eq!(a, derive_seed(7, &[tag::INIT, 0]));
    }

    #[test]
    fn streams_are_reproducible() {
        let x: Vec<u32> = stream(3, &[1, 2]).sample_iter(rand::distributions::Standard).take(8).collect();
        let y: Vec<u32> = stream(3, &[1, 2]).sample_iter(rand::distributions::Standard).take(8).collect();
        assert_eq!(x, y);
    }
}
