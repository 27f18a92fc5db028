//! Reproducible substream random numbers.
//!
//! Every random draw in the toolkit flows from a single 64-bit seed through
//! named substreams. A substream is identified by `(seed, stream_id)`:
//! stream 0 is reserved for outer scenario draws, and outer scenario `i`
//! uses `stream_id = i + 1` for its inner responses. Because a substream is
//! a pure function of `(seed, stream_id)`, results are bit-identical across
//! runs and across any degree of parallelism.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream id reserved for outer scenario (θ) draws.
pub const OUTER_STREAM: u64 = 0;

/// A ChaCha substream keyed by `(seed, stream_id)`.
///
/// ChaCha exposes a 64-bit stream selector independent of the key, which
/// gives statistically independent sequences for distinct `stream_id`s
/// under the same seed.
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

    /// Substream for outer scenario draws.
    pub fn outer(seed: u64) -> Self {
        Self::new(seed, OUTER_STREAM)
    }

    /// Substream for the inner responses of outer scenario `index`.
    pub fn scenario(seed: u64, index: usize) -> Self {
        Self::new(seed, index as u64 + 1)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

/// Derives an independent seed for a named lane (e.g. a replication index
/// of a coverage experiment), so each lane gets its own full stream space.
///
/// SplitMix64 finalizer over `seed + lane`; bijective in the mixed word,
/// so distinct lanes never collide for a fixed seed.
pub fn lane_seed(seed: u64, lane: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(lane.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }
}
