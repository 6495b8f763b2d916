//! Small shared helpers: the project-wide seeded PRNG and a 64-bit content hash.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The one PRNG used everywhere a seed appears: ChaCha8, seeded via a
/// splitmix64 expansion of `(seed, stream)`. Splits are reproducible across
/// platforms and independent per stream id.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(stream)))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// FNV-1a over raw bytes; used for input digests and graph fingerprints.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Fingerprint of an adjacency matrix: FNV-1a over the little-endian bytes
/// of its row-major f64 entries.
pub fn matrix_fingerprint(values: &ndarray::Array2<f64>) -> u64 {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fnv1a64(&bytes)
}

/// Seeded Fisher-Yates shuffle of `0..n`.
pub fn shuffled_indices(n: usize, seed: u64, stream: u64) -> Vec<usize> {
    use rand::Rng;
    let mut rng = seeded_rng(seed, stream);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    idx
}
