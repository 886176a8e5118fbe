//! Seeded random streams.
//!
//! Every stochastic step draws from a `ChaCha8Rng`. Long runs split their
//! randomness into numbered streams of one seed so that epoch `e` always sees
//! the same draws no matter how the run was interrupted or resumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream `stream` of `seed`; streams of one seed never overlap.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
