//! Counter-based standard normal draws.
//!
//! Every draw is addressed by `(seed, stream, index)`: the ChaCha8 key comes
//! from the seed, the ChaCha stream is the path index and the word position
//! is the step index. A path therefore produces the same numbers no matter
//! how many paths are simulated or how they are split across threads.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

/// SplitMix64 finalizer, used to derive independent keys from a master seed.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed for a labelled sub-experiment.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    mix64(seed ^ mix64(label))
}

/// Maps a 64-bit word to the open interval (0, 1).
#[inline]
pub fn unit_open(word: u64) -> f64 {
    ((word >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Standard normal quantile.
#[inline]
pub fn normal_quantile(u: f64) -> f64 {
    standard_normal().inverse_cdf(u)
}

fn standard_normal() -> &'static Normal {
    static N: std::sync::OnceLock<Normal> = std::sync::OnceLock::new();
    N.get_or_init(|| Normal::new(0.0, 1.0).expect("unit normal"))
}

/// Source of standard normal increments addressed by `(path, step)`.
pub trait NormalSource: Sync {
    /// Returns a sequential reader for one path, starting at step 0.
    fn path(&self, path: u64) -> PathNormals<'_>;
}

/// Sequential reader over one path's normals.
pub enum PathNormals<'a> {
    Counter(ChaCha8Rng),
    Fixed(&'a dyn Fn(u64, u64) -> f64, u64, u64),
}

impl PathNormals<'_> {
    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        match self {
            PathNormals::Counter(rng) => normal_quantile(unit_open(rng.next_u64())),
            PathNormals::Fixed(f, path, step) => {
                let z = f(*path, *step);
                *step += 1;
                z
            }
        }
    }

    /// Skip ahead so the next draw is the one for `step`.
    pub fn seek(&mut self, step: u64) {
        match self {
            PathNormals::Counter(rng) => rng.set_word_pos(2 * step as u128),
            PathNormals::Fixed(_, _, s) => *s = step,
        }
    }
}

/// The default generator: ChaCha8 keyed by seed, stream = path index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterNormals {
    pub seed: u64,
}

impl CounterNormals {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// The normal at `(path, step)` without constructing a reader.
    pub fn at(&self, path: u64, step: u64) -> f64 {
        let mut r = self.path(path);
        r.seek(step);
        r.next_normal()
    }
}

impl NormalSource for CounterNormals {
    fn path(&self, path: u64) -> PathNormals<'_> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(path);
        PathNormals::Counter(rng)
    }
}

/// Deterministic normals from a closure, used to pin increments in tests.
pub struct FixedNormals<F: Fn(u64, u64) -> f64 + Sync>(pub F);

impl<F: Fn(u64, u64) -> f64 + Sync> NormalSource for FixedNormals<F> {
    fn path(&self, path: u64) -> PathNormals<'_> {
        PathNormals::Fixed(&self.0, path, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_are_addressable() {
        let src = CounterNormals::new(42);
        let mut r = src.path(7);
        let seq: Vec<f64> = (0..10).map(|_| r.next_normal()).collect();
        for (k, z) in seq.iter().enumerate() {
            assert_eq!(*z, src.at(7, k as u64));
        }
        assert_ne!(src.at(7, 0), src.at(8, 0));
        assert_ne!(src.at(7, 0), CounterNormals::new(43).at(7, 0));
    }

    #[test]
    fn moments_look_normal() {
        let src = CounterNormals::new(1);
        let mut r = src.path(0);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| r.next_normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn unit_open_never_hits_endpoints() {
        assert!(unit_open(0) > 0.0);
        assert!(unit_open(u64::MAX) < 1.0);
    }
}
