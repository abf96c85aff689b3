//! Seeded problem generation.
//!
//! Draws come from SplitMix64 used as a counter-based generator: the `i`-th
//! word of stream `s` under seed `x` is `mix(x + (s * 2^32 + i + 1) * GAMMA)`
//! with the usual SplitMix64 finalizer. A word `u` maps to `[0, 1)` as
//! `(u >> 11) * 2^-53` and then affinely to `[-bound, bound]`. Streams 0, 1
//! and 2 feed Q, K and V in row-major order, so every entry is reproducible
//! from `(seed, stream, index)` alone on any platform.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Word `index` of `stream` under `seed`.
#[inline]
pub fn counter_word(seed: u64, stream: u64, index: u64) -> u64 {
    let counter = (stream << 32).wrapping_add(index).wrapping_add(1);
    mix(seed.wrapping_add(counter.wrapping_mul(GAMMA)))
}

/// Uniform draw in `[0, 1)`.
#[inline]
pub fn unit_draw(seed: u64, stream: u64, index: u64) -> f64 {
    (counter_word(seed, stream, index) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Matrix with entries uniform in `[-bound, bound]` drawn from one stream.
pub fn uniform_matrix<T: Scalar>(rows: usize, cols: usize, bound: f64, seed: u64, stream: u64) -> Matrix<T> {
    Matrix::from_fn(rows, cols, |i, j| {
        let u = unit_draw(seed, stream, (i * cols + j) as u64);
        T::of(-bound + 2.0 * bound * u)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance<T> {
    pub n: usize,
    pub d: usize,
    /// Bound on the magnitude of Q and K entries.
    pub bound: f64,
    pub seed: u64,
    pub q: Matrix<T>,
    pub k: Matrix<T>,
    pub v: Matrix<T>,
}

/// Q and K uniform on `[-bound, bound]`, V uniform on `[-vmax, vmax]`.
///
/// Zero bounds are accepted and give all-zero matrices.
pub fn gen_problem<T: Scalar>(n: usize, d: usize, bound: f64, vmax: f64, seed: u64) -> Result<ProblemInstance<T>> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument(format!("dimensions must be positive, got n={n} d={d}")));
    }
    if !(bound.is_finite() && bound >= 0.0) || !(vmax.is_finite() && vmax >= 0.0) {
        return Err(Error::InvalidArgument(format!("bounds must be finite and >= 0, got B={bound} vmax={vmax}")));
    }
    let q = uniform_matrix(n, d, bound, seed, 0);
    let k = uniform_matrix(n, d, bound, seed, 1);
    let v = uniform_matrix(n, d, vmax, seed, 2);
    Ok(ProblemInstance { n, d, bound, seed, q, k, v })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_width_interval() {
        let p = gen_problem::<f64>(1, 1, 0.0, 0.0, 7).unwrap();
        assert_eq!(p.q.data(), &[0.0]);
        assert_eq!(p.k.data(), &[0.0]);
        assert_eq!(p.v.data(), &[0.0]);
    }

    #[test]
    fn deterministic() {
        let a = gen_problem::<f64>(5, 3, 0.7, 2.0, 99).unwrap();
        let b = gen_problem::<f64>(5, 3, 0.7, 2.0, 99).unwrap();
        let bits = |m: &Matrix<f64>| m.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.q), bits(&b.q));
        assert_eq!(bits(&a.k), bits(&b.k));
        assert_eq!(bits(&a.v), bits(&b.v));
        assert_ne!(a.q, gen_problem::<f64>(5, 3, 0.7, 2.0, 100).unwrap().q);
    }

    #[test]
    fn respects_bounds() {
        let p = gen_problem::<f64>(4, 2, 0.5, 1.0, 42).unwrap();
        assert!(p.q.data().iter().chain(p.k.data()).all(|x| x.abs() <= 0.5));
        assert!(p.v.data().iter().all(|x| x.abs() <= 1.0));
    }

    #[test]
    fn streams_are_distinct() {
        let p = gen_problem::<f64>(3, 3, 1.0, 1.0, 1).unwrap();
        assert_ne!(p.q, p.k);
        assert_ne!(p.k, p.v);
    }

    #[test]
    fn splitmix_reference_word() {
        // Seed 0, first output of the reference SplitMix64 stepping generator.
        assert_eq!(counter_word(0, 0, 0), 0xE220_A839_7B1D_CDAF);
    }

    #[test]
    fn invalid_dimensions() {
        assert!(gen_problem::<f64>(0, 2, 1.0, 1.0, 0).is_err());
        assert!(gen_problem::<f64>(2, 0, 1.0, 1.0, 0).is_err());
        assert!(gen_problem::<f64>(2, 2, -1.0, 1.0, 0).is_err());
        assert!(gen_problem::<f64>(2, 2, 1.0, f64::NAN, 0).is_err());
    }
}
