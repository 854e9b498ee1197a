//! Reproducible random streams.
//!
//! The generator is SplitMix64: the state advances by the golden-ratio
//! increment `0x9E3779B97F4A7C15` and each output is the state passed through
//! the `(30, 27, 31)` xor-shift/multiply finalizer. Floats take the top 53
//! bits. Normals use the cosine branch of Box-Muller with `u1` drawn from
//! `(0, 1]`, one normal per two uniforms. Child streams are seeded from the
//! parent's outputs, so any implementation of the same steps reproduces the
//! same draws.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    state: u64,
}

/// The SplitMix64 output finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a over a byte string.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: seed }
    }

    /// Stream keyed by a seed and a label, independent of draw order elsewhere.
    pub fn derive(seed: u64, label: &str) -> Self {
        Rng::new(mix64(seed ^ fnv1a(label.as_bytes())))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `[0, n)`; `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Lemire's multiply-shift; the bias is below 2^-64 * n.
        ((u128::from(self.next_u64()) * n as u128) >> 64) as usize
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    pub fn normal(&mut self) -> f64 {
        use crate::math::{cos, ln, sqrt};
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        sqrt(-2.0 * ln(u1)) * cos(core::f64::consts::TAU * u2)
    }

    /// `n` child streams, each seeded from one parent output.
    pub fn split(&mut self, n: usize) -> alloc::vec::Vec<Rng> {
        (0..n).map(|_| Rng::new(mix64(self.next_u64()))).collect()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
