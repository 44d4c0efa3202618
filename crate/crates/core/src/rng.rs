//! Seeded random streams.
//!
//! Every stochastic quantity (initialization, shuffling, dropout, noise,
//! negative sampling) draws from its own ChaCha stream keyed by
//! `(seed, purpose, a, b)`, so results never depend on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Purpose tags keep streams for different jobs disjoint even under equal seeds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Shuffle = 2,
    Dropout = 3,
    Noise = 4,
    Negatives = 5,
    Mask = 6,
    Synthetic = 7,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, purpose: Purpose, a: u64, b: u64) -> Stream {
    let mut h = splitmix(seed);
    h = splitmix(h ^ purpose as u64);
    h = splitmix(h ^ a);
    h = splitmix(h ^ b.rotate_left(17));
    ChaCha8Rng::seed_from_u64(h)
}
