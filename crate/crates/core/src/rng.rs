//! Stream splitting for reproducible parallel sampling.
//!
//! A parent generator contributes one `u64`; work item `k` then runs on
//! ChaCha stream `k` of that key. Results depend only on the parent state and
//! the item index, never on how rayon schedules the items.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Draws per parallel work item in the samplers.
pub const CHUNK: usize = 512;

#[derive(Debug, Clone, Copy)]
pub struct StreamKey(u64);

impl StreamKey {
    pub fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StreamKey(rng.random())
    }

    pub fn stream(&self, index: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.0);
        r.set_stream(index);
        r
    }
}

/// Number of chunks covering `count` items.
pub fn chunk_count(count: usize) -> usize {
    count.div_ceil(CHUNK)
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
