//! Deterministic random streams fanned out from a single root seed.
//!
//! Every consumer of randomness names its stream (and optionally an index,
//! e.g. a frame number), so adding a new consumer never perturbs existing
//! ones and any stream can be reproduced in isolation.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One avalanche round (splitmix64 finalizer); bijective on `u64`.
fn avalanche(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a hash of a byte string.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Named substream of the root seed.
pub fn substream(seed: u64, name: &str) -> ChaCha8Rng {
    substream_n(seed, name, 0)
}

/// Named and indexed substream of the root seed (e.g. per frame or per step).
pub fn substream_n(seed: u64, name: &str, index: u64) -> ChaCha8Rng {
    let mut x = avalanche(seed ^ fnv1a(name.as_bytes()));
    x = avalanche(x ^ index.rotate_left(32));
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        x = avalanche(x.wrapping_add(0x9E37_79B9_7F4A_7C15));
        chunk.copy_from_slice(&x.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Uniform sample in `[lo, hi)`.
pub fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

/// Standard normal sample via Box–Muller (one value per two uniforms).
pub fn normal(rng: &mut impl Rng, mean: f64, std: f64) -> f64 {
    use num_traits::Float;
    // 1 - u keeps the log argument in (0, 1].
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    let z = Float::sqrt(-2.0 * Float::ln(u1)) * Float::cos(core::f64::consts::TAU * u2);
    mean + std * z
}
