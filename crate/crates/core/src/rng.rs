//! Keyed, counter-style random streams.
//!
//! Every piece of randomness in this crate is derived from a 64-bit key built
//! by folding identifying parts (master seed, purpose tag, vertex address,
//! replica index, ...) through splitmix64. Two call sites that build the same
//! key read the same stream, independent of query order. That property is what
//! lets a lazily materialized infinite tree answer queries identically no
//! matter which exploration touches it first.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// splitmix64 step (Steele, Lea, Flood). Full-period permutation of u64.
#[inline]
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fold `parts` into a single 64-bit stream key.
pub fn fold_key(parts: &[u64]) -> u64 {
    let mut h = 0x8533_15D5_7F4A_11C3u64;
    for &p in parts {
        h = splitmix64(h ^ p);
    }
    h
}

/// A seekable random stream for one keyed entity.
///
/// ChaCha8 keyed off the folded parts; statistically solid and stable across
/// platforms and releases of this crate.
pub fn stream(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(fold_key(parts))
}

/// One u64 from a key without materializing a stream. Used on hot paths
/// (i.i.d. edge weights of `K_n`) where a single draw per key is needed.
#[inline]
pub fn keyed_u64(parts: &[u64]) -> u64 {
    splitmix64(fold_key(parts))
}

/// Uniform on the open interval (0, 1); never returns 0 or 1.
/// 52 bits so that the +0.5 offset stays exactly representable.
#[inline]
pub fn unit_open(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / 4_503_599_627_370_496.0)
}

pub trait RngExt: RngCore {
    /// Uniform f64 on (0, 1).
    #[inline]
    fn uniform(&mut self) -> f64 {
        unit_open(self.next_u64())
    }

    /// Unit-mean exponential by inversion.
    #[inline]
    fn exp1(&mut self) -> f64 {
        -self.uniform().ln()
    }

    /// Uniform integer in `[0, n)`, rejection-corrected (no modulo bias).
    fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        let zone = u64::MAX - (u64::MAX - n + 1) % n;
        loop {
            let v = self.next_u64();
            if v <= zone {
                return v % n;
            }
        }
    }

    /// Poisson count by exponential-product inversion. Intended for the
    /// offspring means of this crate (below ~30); cost grows linearly in `m`.
    fn poisson(&mut self, m: f64) -> u64 {
        debug_assert!(m >= 0.0);
        let limit = (-m).exp();
        let mut k = 0u64;
        let mut prod = self.uniform();
        while prod > limit {
            k += 1;
            prod *= self.uniform();
        }
        k
    }
}

impl<R: RngCore + ?Sized> RngExt for R {}

/// Purpose tags keeping unrelated streams on disjoint keys.
pub mod purpose {
    pub const CHILD_WEIGHTS: u64 = 0x01;
    pub const MARK: u64 = 0x02;
    pub const EDGE_WEIGHT: u64 = 0x03;
    pub const FALLBACK_EDGE: u64 = 0x04;
    pub const REPLICA: u64 = 0x05;
    pub const GENERIC: u64 = 0x06;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keyed_streams_are_deterministic_and_disjoint() {
        let mut a = stream(&[7, 1, 2]);
        let mut b = stream(&[7, 1, 2]);
        let mut c = stream(&[7, 1, 3]);
        let xs: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        let zs: Vec<u64> = (0..8).map(|_| c.next_u64()).collect();
        assert_eq!(xs, ys);
        assert_ne!(xs, zs);
    }

    #[test]
    fn exp1_mean_and_tail() {
        let mut r = stream(&[42]);
        let n = 200_000;
        let mut sum = 0.0;
        let mut over = 0usize;
        for _ in 0..n {
            let e = r.exp1();
            sum += e;
            if e > 1.0 {
                over += 1;
            }
        }
        let mean = sum / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
        let p = over as f64 / n as f64;
        assert!((p - (-1.0f64).exp()).abs() < 0.005, "tail {p}");
    }

    #[test]
    fn below_is_unbiased_at_small_n() {
        let mut r = stream(&[11]);
        let mut counts = [0u64; 5];
        for _ in 0..100_000 {
            counts[r.below(5) as usize] += 1;
        }
        for &c in &counts {
            assert!((c as f64 - 20_000.0).abs() < 600.0, "counts {counts:?}");
        }
    }

    #[test]
    fn poisson_mean_matches() {
        let mut r = stream(&[13]);
        let m = 1.7;
        let n = 100_000;
        let total: u64 = (0..n).map(|_| r.poisson(m)).sum();
        let mean = total as f64 / n as f64;
        assert!((mean - m).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn unit_open_never_hits_endpoints() {
        assert!(unit_open(0) > 0.0);
        assert!(unit_open(u64::MAX) < 1.0);
    }
}
