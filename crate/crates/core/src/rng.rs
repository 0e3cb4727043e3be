//! Deterministic random-number streams.
//!
//! Every stochastic operation takes its generator from a [`SeedTree`] node keyed by
//! the logical position of the work (replicate, step, particle, ...), so results do
//! not depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type StreamRng = Xoshiro256PlusPlus;

/// A node in a tree of seeds derived from one master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedTree {
    key: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeedTree {
    pub fn new(master: u64) -> Self {
        SeedTree {
            key: splitmix64(master ^ 0x5DEE_CE66_D1CE_4E5B),
        }
    }

    /// Child node for `tag`. Distinct tags give statistically independent streams.
    pub fn child(&self, tag: u64) -> SeedTree {
        SeedTree {
            key: splitmix64(self.key ^ splitmix64(tag.wrapping_mul(0xD6E8_FEB8_6659_FD93))),
        }
    }

    pub fn path(&self, tags: &[u64]) -> SeedTree {
        tags.iter().fold(*self, |node, &t| node.child(t))
    }

    pub fn rng(&self) -> StreamRng {
        StreamRng::seed_from_u64(self.key)
    }

    pub fn key(&self) -> u64 {
        self.key
    }
}
