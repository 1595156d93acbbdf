//! Seeded random streams.
//!
//! Every random draw in the crate comes from a [`RandomStream`]: ChaCha8
//! (via `rand_chacha`, whose output is value-stable across releases and
//! platforms) keyed by a 64-bit master seed, with the ChaCha stream id
//! selected from a purpose label. Two streams with the same seed and label
//! produce the same sequence; different labels are independent.
//!
//! Derived draws (uniform floats, Gaussians, bounded integers) are computed
//! here rather than through `rand`'s distribution types so that the exact
//! sequence is pinned by this crate:
//!
//! * `next_f64` takes the top 53 bits of a `u64` and scales by 2^-53.
//! * `normal` is the Box–Muller transform, caching the second variate.
//! * `below(n)` is Lemire's multiply-shift with rejection.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Label hash used to pick a ChaCha stream id (64-bit FNV-1a).
fn stream_id(label: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in label.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[derive(Debug, Clone)]
pub struct RandomStream {
    inner: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl RandomStream {
    /// Stream for `label` under `seed`.
    pub fn new(seed: u64, label: &str) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id(label));
        Self {
            inner,
            spare_normal: None,
        }
    }

    /// Child stream keyed by `(seed, label, index)`, e.g. one per forest tree.
    pub fn indexed(seed: u64, label: &str, index: u64) -> Self {
        Self::new(seed, &format!("{label}/{index}"))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal variate.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // 1 - U keeps the log argument in (0, 1].
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.spare_normal = Some(radius * angle.sin());
        radius * angle.cos()
    }

    /// Uniform integer in `[0, n)`. Panics when `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = u128::from(self.next_u64()) * u128::from(n);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// `k` distinct indices from `0..n`, returned in ascending order.
    pub fn choose_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        let k = k.min(n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below((n - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool.sort_unstable();
        pool
    }
}
