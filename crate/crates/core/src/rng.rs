//! Seeded random sources.
//!
//! Every stochastic operation takes an explicit `Rng`. Independent streams are
//! derived from a master seed and a path of integer tags so that results do not
//! depend on the order in which jobs are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` and a path of tags.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn substream(seed: u64, tags: &[u64]) -> SimRng {
    seeded(derive_seed(seed, tags))
}
