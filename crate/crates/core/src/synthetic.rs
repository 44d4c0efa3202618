//! Seeded synthetic corpora for tests and demos.

use alloc::vec::Vec;

use rand::Rng;

use crate::corpus::{Event, UserSequences};
use crate::rng::{stream, Purpose};

const T0: i64 = 1_300_000_000;

fn timestamps(rng: &mut impl Rng, len: usize) -> Vec<i64> {
    let mut t = T0 + rng.random_range(0..86_400 * 30);
    (0..len)
        .map(|_| {
            t += rng.random_range(600..86_400);
            t
        })
        .collect()
}

/// Every user walks the cycle `1 → 2 → … → period → 1` from a random start;
/// lengths are uniform in `min_len..=max_len`.
pub fn cyclic_corpus(n_users: usize, period: u32, min_len: usize, max_len: usize, seed: u64) -> UserSequences {
    let sequences = (0..n_users)
        .map(|u| {
            let mut rng = stream(seed, Purpose::Synthetic, u as u64, 0);
            let len = rng.random_range(min_len..=max_len);
            let start = rng.random_range(0..period);
            let ts = timestamps(&mut rng, len);
            (0..len).map(|k| Event { item: (start + k as u32) % period + 1, timestamp: ts[k] }).collect()
        })
        .collect();
    UserSequences::from_dense(period as usize, sequences)
}

/// Items drawn uniformly from `1..=n_items`, independent of history.
pub fn random_corpus(n_users: usize, n_items: u32, min_len: usize, max_len: usize, seed: u64) -> UserSequences {
    let sequences = (0..n_users)
        .map(|u| {
            let mut rng = stream(seed, Purpose::Synthetic, u as u64, 1);
            let len = rng.random_range(min_len..=max_len);
            let ts = timestamps(&mut rng, len);
            ts.into_iter().map(|timestamp| Event { item: rng.random_range(1..=n_items), timestamp }).collect()
        })
        .collect();
    UserSequences::from_dense(n_items as usize, sequences)
}
