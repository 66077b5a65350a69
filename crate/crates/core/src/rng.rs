//! Seeded, splittable random streams.
//!
//! Every draw in the crate comes from a ChaCha8 generator keyed by
//! `(seed, stream)`. Separate streams never overlap, so adding a new draw
//! under a fresh stream id leaves all existing draws unchanged.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream ids used by the generators and selection procedures.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Target = 1,
    Source = 2,
    Holdout = 3,
    Test = 4,
    Folds = 5,
}

pub fn substream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn stream(seed: u64, s: Stream) -> Rng {
    substream(seed, s as u64)
}

/// Child seed for repetition `rep` of an experiment seeded with `seed`
/// (splitmix64 finalizer over the pair).
pub fn derive_seed(seed: u64, rep: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(rep.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
