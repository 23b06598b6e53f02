//! Seed splitting.
//!
//! Every stochastic step draws from its own ChaCha stream whose seed is
//! `derive_seed(master, subsystem, index)`: FNV-1a over the subsystem name,
//! folded with the master seed and the index through two SplitMix64 rounds.
//! Streams therefore depend only on what they are for, never on the order in
//! which work happens to be scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn derive_seed(master: u64, subsystem: &str, index: u64) -> u64 {
    let a = splitmix64(master ^ fnv1a(subsystem.as_bytes()));
    splitmix64(a ^ splitmix64(index))
}

pub fn stream(master: u64, subsystem: &str, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(master, subsystem, index))
}
