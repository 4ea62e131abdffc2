//! Reproducible random streams.
//!
//! Every consumer of randomness (a rank's propagation and resampling, the
//! movie generator, the shared ring shuffler used by ARNA) owns an
//! [`RngStream`] identified by `(seed, stream_id)`. The generator is ChaCha8
//! with the stream id mapped onto ChaCha's 64-bit stream selector, so streams
//! that share a seed never overlap.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stream id used by the synthetic movie generator.
pub const MOVIE_STREAM: u64 = 1 << 40;
/// Stream id of the generator replicated on every rank (ring reshuffles).
pub const SHARED_STREAM: u64 = 1 << 41;
/// Stream id used for background calibration of the ARNA tracking threshold.
pub const CALIBRATION_STREAM: u64 = 1 << 42;

/// Stream id for the per-rank filter stream.
pub fn rank_stream(rank: usize) -> u64 {
    rank as u64
}

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
