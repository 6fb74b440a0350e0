//! Per-slot random streams. Every slot draws from its own ChaCha stream
//! keyed by `(seed, purpose)`, so slots can be generated in any order or in
//! parallel and still reproduce the same dataset.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub(crate) enum Purpose {
    PhotonCounts = 0x7068_6f74_6f6e_7321,
    Noise = 0x6e6f_6973_6521_2121,
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

pub(crate) fn slot_rng(seed: u64, purpose: Purpose, slot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ purpose as u64));
    rng.set_stream(slot);
    rng
}
