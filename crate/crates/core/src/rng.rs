//! Counter-based random streams.
//!
//! Every draw is addressed by `(seed, purpose, index)`: the seed keys a
//! ChaCha8 generator, the purpose selects its stream and the index selects a
//! disjoint 2³² word window inside that stream. Item `k` of any sequence is
//! therefore computable without generating items `0..k`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Batch = 2,
    Latent = 3,
    Mixing = 4,
    Noise = 5,
    PathLength = 6,
    PathLatent = 7,
    Phantom = 8,
    Projection = 9,
    Metrics = 10,
    Extractor = 11,
    Sample = 12,
    ConstNoise = 13,
    Regularizer = 14,
}

pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose as u64);
    rng.set_word_pos((index as u128) << 32);
    rng
}
