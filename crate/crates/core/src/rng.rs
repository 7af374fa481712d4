//! Counter-based random streams.
//!
//! Every random draw in a run comes from a ChaCha stream selected by
//! `(seed, purpose, iteration, index)`. Particle moves at iteration `t` for
//! particle `i` always see the same numbers, whichever thread executes them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share key space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Particle = 1,
    Resample = 2,
    Data = 3,
    Study = 4,
    Aux = 5,
}

fn mix(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent 64-bit seed from a base seed and a label.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    mix(mix(seed) ^ mix(label.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Stream for `(seed, purpose, iteration, index)`.
pub fn stream(seed: u64, purpose: Purpose, iteration: u64, index: u64) -> StreamRng {
    let key = derive_seed(seed, purpose as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(key, iteration));
    rng.set_stream(index);
    rng
}
