//! Fixtures shared by the benchmarks.

use genpas::corpus::UserSequence;
use genpas::rng::seeded;
use genpas::ItemId;
use rand::Rng;

/// `users` sequences with lengths uniform in `min_len..=max_len` over
/// `items` items.
pub fn random_sequences(users: usize, min_len: usize, max_len: usize, items: ItemId, seed: u64) -> Vec<UserSequence> {
    let mut rng = seeded(seed);
    (0..users)
        .map(|u| {
            let n = rng.random_range(min_len..=max_len);
            UserSequence { user: u as u32, items: (0..n).map(|_| rng.random_range(0..items)).collect() }
        })
        .collect()
}
