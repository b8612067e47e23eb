//! Counter-based random streams.
//!
//! Every draw is addressed by `(seed, stream, index)`, so a particle or sample
//! gets the same numbers no matter which thread evaluates it or in what order.
//! The stream cipher is ChaCha8: `stream` selects the ChaCha nonce and `index`
//! the 64-bit word position inside it.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

const INV_2_53: f64 = 1.0 / (1u64 << 53) as f64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CounterRng {
    seed: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// A sequential generator positioned at word `index` of `stream`.
    pub fn stream(&self, stream: u64, index: u64) -> StreamCursor {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng.set_word_pos(u128::from(index) * 2);
        StreamCursor { rng }
    }

    /// The single uniform in `[0, 1)` at `(stream, index)`.
    pub fn uniform(&self, stream: u64, index: u64) -> f64 {
        self.stream(stream, index).next_uniform()
    }
}

/// Reads consecutive words from one stream.
#[derive(Clone, Debug)]
pub struct StreamCursor {
    rng: ChaCha8Rng,
}

impl StreamCursor {
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * INV_2_53
    }
}
