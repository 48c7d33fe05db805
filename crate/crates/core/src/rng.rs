//! Named random substreams derived from a single run seed.
//!
//! Every consumer of randomness (augmentation, weight init, shuffling,
//! dropout, GAN batches, splitting) draws from its own ChaCha stream keyed by
//! `(seed, stream, index)`, so parallel and serial execution agree.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seed used when a run does not specify one.
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Augment,
    Init,
    Shuffle,
    Dropout,
    Gan,
    Split,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Augment => 0x6175_676d,
            Stream::Init => 0x696e_6974,
            Stream::Shuffle => 0x7368_7566,
            Stream::Dropout => 0x6472_6f70,
            Stream::Gan => 0x0067_616e,
            Stream::Split => 0x7370_6c74,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `(seed, stream, index)` into a 64-bit stream seed.
pub fn derive_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ stream.tag()) ^ index)
}

pub fn substream(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream, index))
}
