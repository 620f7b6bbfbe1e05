//! Named, deterministic random streams.
//!
//! Every random draw in the crate comes from a [`StreamRng`] derived from a
//! master seed plus a component label and an index. Two derivations with the
//! same triple always yield the same stream, independent of thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over the label bytes; stable across platforms and releases.
fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derives a child seed from `(master, label, index)`.
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    let a = splitmix64(master ^ label_hash(label));
    splitmix64(a ^ splitmix64(index.wrapping_add(0x632b_e59b_d9b4_e019)))
}

/// Random stream for component `label`, unit `index`.
pub fn stream(master: u64, label: &str, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(master, label, index))
}
