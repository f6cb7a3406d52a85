//! Seeded generator streams.
//!
//! All randomness in the crate flows from a 64-bit seed. Independent streams
//! (parallel sampling shards, per-trial or per-user draws) are derived by
//! selecting a ChaCha stream id, so results do not depend on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type GenRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> GenRng {
    GenRng::seed_from_u64(seed)
}

/// Generator for stream `stream_id` under `seed`.
pub fn stream(seed: u64, stream_id: u64) -> GenRng {
    let mut rng = GenRng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Draws a fresh seed from `rng`, used to fan out into indexed streams.
pub fn child_seed<R: Rng + ?Sized>(rng: &mut R) -> u64 {
    rng.random()
}
