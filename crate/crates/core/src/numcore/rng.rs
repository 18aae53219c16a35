//! Seeded random streams.
//!
//! Every stream is a ChaCha8 generator (counter-based). A master seed is
//! expanded with `ChaCha8Rng::seed_from_u64` and each named purpose gets its
//! own ChaCha stream id, so drawing more shuffle numbers never shifts the
//! initialization draws.
//!
//! Keyed streams (used for out-of-vocabulary vectors) hash
//! `seed (LE u64) || stream id (LE u64) || key bytes` with SHA-256 and use the
//! digest as the 32-byte ChaCha key. The result depends only on the key, not
//! on how many other keys were drawn before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Prng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Dropout = 2,
    Shuffle = 3,
    Oov = 4,
}

pub fn stream(seed: u64, which: Stream) -> Prng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

pub fn keyed(seed: u64, which: Stream, key: &[u8]) -> Prng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((which as u64).to_le_bytes());
    h.update(key);
    ChaCha8Rng::from_seed(h.finalize().into())
}
