//! Seeded random streams.
//!
//! Every stream is ChaCha8 (8 double-rounds of the ChaCha block function)
//! keyed by `ChaCha8Rng::seed_from_u64(master)`, with its 64-bit stream
//! id set to a SplitMix64 fold of a label path such as
//! `[SITE, site_id, round]`. Streams for different paths never overlap, and
//! every draw below is defined in terms of raw `u64` words so results do not
//! depend on the version of any distribution crate:
//!
//! * `uniform`: top 53 bits of a word scaled by 2^-53, in `[0, 1)`.
//! * `normal`: Box-Muller on two uniforms, both outputs used in turn.
//! * `below(n)`: rejection sampling on the low-bias zone of a word.
//! * `shuffle`: Fisher-Yates from the last element down.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a label path into one 64-bit stream id.
pub fn path_id(path: &[u64]) -> u64 {
    path.iter().fold(GOLDEN, |acc, &p| mix64(acc.wrapping_add(GOLDEN) ^ mix64(p.wrapping_add(GOLDEN))))
}

/// Stream labels, so that call sites name their purpose.
pub mod label {
    pub const INIT: u64 = 1;
    pub const AUX_INIT: u64 = 2;
    pub const SITE_GEN: u64 = 3;
    pub const SIGNAL: u64 = 4;
    pub const SLIDE: u64 = 5;
    pub const SPLIT: u64 = 6;
    pub const SUBSAMPLE: u64 = 7;
    pub const SHUFFLE: u64 = 8;
    pub const MASK: u64 = 9;
    pub const DEMO: u64 = 10;
    pub const EVAL: u64 = 11;
}

#[derive(Clone, Debug)]
pub struct Stream {
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl Stream {
    pub fn new(seed: u64, path: &[u64]) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(path_id(path));
        Self { inner, spare: None }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform integer in `[0, n)`. Panics when `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "empty range");
        let zone = u64::MAX - (u64::MAX % n) - 1;
        loop {
            let v = self.next_u64();
            if v <= zone {
                return v % n;
            }
        }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// `m` distinct indices from `0..n`, returned in ascending order.
    pub fn sample_indices(&mut self, n: usize, m: usize) -> Vec<usize> {
        assert!(m <= n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..m {
            let j = i + self.below((n - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(m);
        pool.sort_unstable();
        pool
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map({
            let mut s = Stream::new(7, &[1, 2]);
            move |_| s.next_u64()
        }).collect();
        let b: Vec<u64> = (0..4).map({
            let mut s = Stream::new(7, &[1, 2]);
            move |_| s.next_u64()
        }).collect();
        let c: Vec<u64> = (0..4).map({
            let mut s = Stream::new(7, &[1, 3]);
            move |_| s.next_u64()
        }).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn normal_moments() {
        let mut s = Stream::new(1, &[0]);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| s.normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01);
        assert!((var - 1.0).abs() < 0.02);
    }

    #[test]
    fn sample_indices_are_distinct() {
        let mut s = Stream::new(3, &[9]);
        let idx = s.sample_indices(50, 20);
        assert_eq!(idx.len(), 20);
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(s.sample_indices(5, 5), vec![0, 1, 2, 3, 4]);
    }
}
