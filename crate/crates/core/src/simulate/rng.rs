//! Counter-based random streams: path `i` of a run seeded with `s` always
//! draws from ChaCha8 keyed by `s` on stream `i`, whatever thread simulates it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn path_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

/// Seed for an independent sub-run, e.g. one check of a verification suite.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = splitmix64(seed);
    for b in label.bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    h
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
