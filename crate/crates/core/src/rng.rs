//! Named, seedable random streams.
//!
//! Each stream is a ChaCha8 keystream keyed by the run seed and selected by
//! a stream id derived from the stream name, so `dropout`, `crop`, `init`
//! and the other consumers never perturb each other's draw sequence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Well-known stream names.
pub mod streams {
    pub const INIT: &str = "init";
    pub const DROPOUT: &str = "dropout";
    pub const CROP: &str = "crop";
    pub const SHUFFLE: &str = "shuffle";
    pub const DATA_GEN: &str = "data-gen";
    pub const GRAD_CHECK: &str = "grad-check";
}

#[derive(Clone, Debug)]
pub struct RngStream {
    name: String,
    seed: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, name: &str) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id(name));
        Self {
            name: name.to_owned(),
            seed,
            rng,
        }
    }

    /// A stream whose name is `name` suffixed with `index`, for per-item
    /// sub-streams (one per clip, one per variant, ...).
    pub fn indexed(seed: u64, name: &str, index: u64) -> Self {
        Self::new(seed, &format!("{name}/{index}"))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of 32-bit words consumed so far.
    pub fn position(&self) -> u128 {
        self.rng.get_word_pos()
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `0..=max`.
    pub fn below_inclusive(&mut self, max: usize) -> usize {
        self.rng.gen_range(0..=max)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.gen()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below_inclusive(i);
            items.swap(i, j);
        }
    }
}

/// FNV-1a, so stream ids do not depend on `std`'s hasher.
fn stream_id(name: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in name.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
