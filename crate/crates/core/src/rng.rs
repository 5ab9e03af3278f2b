//! Seeded random streams.
//!
//! A stream is a ChaCha12 generator keyed by `(seed, stream)`. Distinct
//! stream ids give statistically independent sequences, so block sampling,
//! inner-batch sampling and per-trial replication never share draws.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Stream ids reserved by the solver and verification code.
pub mod streams {
    pub const BLOCKS: u64 = 1;
    pub const INNER: u64 = 2;
    pub const INIT: u64 = 3;
    pub const OUTPUT: u64 = 4;
    pub const PROBLEM: u64 = 5;
    pub const DRIVER: u64 = 6;
    /// Trial `k` of a Monte-Carlo experiment uses `TRIALS + 2k` and `TRIALS + 2k + 1`.
    pub const TRIALS: u64 = 1 << 32;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

pub type StreamRng = ChaCha12Rng;

impl RngStream {
    pub const fn new(seed: u64, stream: u64) -> Self {
        RngStream { seed, stream }
    }

    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    pub const fn with_stream(&self, stream: u64) -> RngStream {
        RngStream {
            seed: self.seed,
            stream,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_key_same_sequence() {
        let a: [u64; 4] = RngStream::new(9, 2).rng().random();
        let b: [u64; 4] = RngStream::new(9, 2).rng().random();
        let c: [u64; 4] = RngStream::new(9, 3).rng().random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn pinned_first_draw() {
        // Frozen so that platform or dependency drift shows up as a failure.
        let x: u64 = RngStream::new(1, 1).rng().random();
        assert_eq!(x, 0x2fc6_d388_0d99_3617);
    }
}
