//! Root-seed splitting into named, independent random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 64-bit FNV-1a. Used wherever a stable, platform-independent hash of a
/// string is needed (seed streams, text-embedding stub).
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// All randomness in a run flows from one root seed; each consumer asks for
/// its own named stream (`"data"`, `"noise"`, `"sampler"`, `"init"`, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStreams {
    root: u64,
}

impl SeedStreams {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    pub fn seed(&self, name: &str) -> u64 {
        splitmix(self.root ^ fnv1a(name.as_bytes()))
    }

    /// Seed for the `index`-th item of a named stream (e.g. one per step).
    pub fn indexed_seed(&self, name: &str, index: u64) -> u64 {
        splitmix(self.seed(name) ^ splitmix(index))
    }

    pub fn rng(&self, name: &str) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed(name))
    }

    pub fn indexed_rng(&self, name: &str, index: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.indexed_seed(name, index))
    }
}
