//! Seeded random streams. Every consumer draws from a stream keyed by the
//! run seed plus a label and counters, so adding a consumer never shifts the
//! numbers another one sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Stream for `(seed, label, a, b)`; `a`/`b` are typically epoch and batch.
pub fn stream(seed: u64, label: &str, a: u64, b: u64) -> Rng {
    let mut h = splitmix(seed);
    for byte in label.bytes() {
        h = splitmix(h ^ byte as u64);
    }
    h = splitmix(h ^ a);
    h = splitmix(h ^ b.rotate_left(32));
    Rng::seed_from_u64(h)
}
