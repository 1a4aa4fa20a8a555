//! Counter-based seed derivation.
//!
//! Every random decision in the crate is drawn from a stream identified by a
//! path of integer tags below a master seed, so results do not depend on how
//! work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A seed for one logical random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamSeed(u64);

// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl StreamSeed {
    pub const fn new(seed: u64) -> Self {
        StreamSeed(seed)
    }

    pub const fn value(self) -> u64 {
        self.0
    }

    /// Child stream for `tag`. Distinct tags give unrelated streams.
    pub fn derive(self, tag: u64) -> Self {
        StreamSeed(mix(self.0 ^ mix(tag)))
    }

    pub fn derive2(self, a: u64, b: u64) -> Self {
        self.derive(a).derive(b)
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

impl From<u64> for StreamSeed {
    fn from(seed: u64) -> Self {
        StreamSeed(seed)
    }
}
