//! Counter-based randomness.
//!
//! Every random value is a pure function of a key made of semantic
//! coordinates (seed, object, texel, channel, ...), so results do not depend
//! on iteration order or on how work is split across threads.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a sequence of words into one 64-bit value.
#[inline]
pub fn hash_words(words: &[u64]) -> u64 {
    let mut h = 0x6A09_E667_F3BC_C909u64;
    for &w in words {
        h = mix64(h.wrapping_add(GOLDEN) ^ mix64(w.wrapping_add(GOLDEN)));
    }
    h
}

/// Derives a subsystem seed from the root seed and a label.
pub fn derive_seed(root: u64, label: &str) -> u64 {
    let mut words = Vec::with_capacity(label.len() / 8 + 2);
    words.push(root);
    for chunk in label.as_bytes().chunks(8) {
        let mut buf = [0u8; 8];
        buf[..chunk.len()].copy_from_slice(chunk);
        words.push(u64::from_le_bytes(buf));
    }
    words.push(label.len() as u64);
    hash_words(&words)
}

/// Uniform sample in the open interval (0, 1).
#[inline]
pub fn uniform_open(key: &[u64], lane: u64) -> f64 {
    let mut words = [0u64; 8];
    let n = key.len().min(7);
    words[..n].copy_from_slice(&key[..n]);
    words[n] = lane;
    let bits = hash_words(&words[..=n]) >> 11;
    (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal sample keyed on `key` (Box-Muller, cosine branch).
#[inline]
pub fn standard_normal(key: &[u64]) -> f64 {
    let u1 = uniform_open(key, 0);
    let u2 = uniform_open(key, 1);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
