//! Portable seeded randomness.
//!
//! Every stream in the crate is a xoshiro256** generator whose 256-bit state
//! is filled by SplitMix64 from a 64-bit seed. Derived quantities are defined
//! here on top of the raw `u64` stream so that other implementations can
//! reproduce datasets and selections bit for bit:
//!
//! * `next_f64`: `(x >> 11) * 2^-53`, uniform on `[0, 1)`.
//! * `below(n)`: draws 64-bit values, rejects those at or above
//!   `2^64 - (2^64 mod n)`, then returns `x mod n`.
//! * `normal`: Box–Muller, `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`; the sine
//!   branch is discarded so each variate consumes exactly two uniforms.
//! * `derive_seed(seed, label)`: SplitMix64 finalizer applied to
//!   `seed ^ fnv1a64(label)`.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

/// Stream labels used by the trainer and generators.
pub mod labels {
    pub const DATA: &str = "data";
    pub const SPLIT: &str = "split";
    pub const LABEL_NOISE: &str = "label_noise";
    pub const INIT: &str = "init";
    pub const SELECT: &str = "select";
    pub const SHUFFLE: &str = "shuffle";
    pub const MONTE_CARLO: &str = "mc";
}

#[derive(Clone, Debug)]
pub struct Rng {
    inner: Xoshiro256StarStar,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256StarStar::seed_from_u64(seed),
        }
    }

    /// Generator for a labelled sub-stream of `seed`.
    pub fn derived(seed: u64, label: &str) -> Self {
        Self::new(derive_seed(seed, label))
    }

    /// Generator for the `index`-th member of a labelled family of streams.
    pub fn indexed(seed: u64, label: &str, index: u64) -> Self {
        Self::new(splitmix64(derive_seed(seed, label) ^ splitmix64(index)))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n + 1) % n;
        loop {
            let x = self.next_u64();
            if x <= zone {
                return (x % n) as usize;
            }
        }
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// In-place Fisher–Yates shuffle, iterating from the last position down.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// `m` distinct indices from `0..n`, uniform without replacement, in
    /// draw order (partial Fisher–Yates from the front).
    pub fn sample_without_replacement(&mut self, n: usize, m: usize) -> Vec<usize> {
        assert!(m <= n, "sample of {m} from {n}");
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..m {
            let j = i + self.below(n - i);
            pool.swap(i, j);
        }
        pool.truncate(m);
        pool
    }
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a64(label: &str) -> u64 {
    label.bytes().fold(0xCBF2_9CE4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

pub fn derive_seed(seed: u64, label: &str) -> u64 {
    splitmix64(seed ^ fnv1a64(label))
}
