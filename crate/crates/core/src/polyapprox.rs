//! Truncated Taylor polynomials for `exp` with grid-certified relative error.
//!
//! Even truncations of the exponential series have no real roots, which keeps
//! the approximate softmax denominators strictly positive downstream.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Number of equispaced points used to certify the relative error on `[-D, D]`.
pub const CERTIFY_GRID_POINTS: usize = 10_001;

/// Largest degree [`choose_degree`] will try.
pub const MAX_DEGREE: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct PolyApprox<T> {
    coeffs: Vec<T>,
    domain: Option<T>,
    rel_err: Option<T>,
}

impl<T: Scalar> PolyApprox<T> {
    /// Coefficients `1/l!` for `l = 0..=g`. The degree must be even.
    pub fn taylor(g: usize) -> Result<Self> {
        if !g.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("degree must be even, got {g}")));
        }
        Ok(Self::truncated_exp(g))
    }

    /// Truncated exponential series of any degree. Odd degrees lose the
    /// positivity guarantee; they are only used to drive I/O schedules.
    pub fn truncated_exp(g: usize) -> Self {
        let mut coeffs = Vec::with_capacity(g + 1);
        let mut c = 1.0f64;
        for l in 0..=g {
            if l > 0 {
                c /= l as f64;
            }
            coeffs.push(T::of(c));
        }
        Self { coeffs, domain: None, rel_err: None }
    }

    pub fn from_coeffs(coeffs: Vec<T>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidArgument("polynomial needs at least one coefficient".into()));
        }
        Ok(Self { coeffs, domain: None, rel_err: None })
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn domain(&self) -> Option<T> {
        self.domain
    }

    pub fn rel_err(&self) -> Option<T> {
        self.rel_err
    }

    /// Horner evaluation.
    pub fn eval(&self, x: T) -> T {
        self.coeffs.iter().rev().fold(T::zero(), |acc, &c| acc * x + c)
    }

    /// Maximum of `|P(x) - exp(x)| / exp(x)` over the certification grid on
    /// `[-D, D]`, recorded on `self`. Non-finite ratios count as infinite error.
    pub fn certify(&mut self, half_width: T) -> T {
        let d = half_width.abs();
        let last = T::of_usize(CERTIFY_GRID_POINTS - 1);
        let two = T::of(2.0);
        let mut worst = T::zero();
        for i in 0..CERTIFY_GRID_POINTS {
            let x = -d + two * d * T::of_usize(i) / last;
            let err = ((self.eval(x) - x.exp()) / x.exp()).abs();
            if !err.is_finite() {
                worst = T::infinity();
                break;
            }
            worst = worst.max(err);
        }
        self.domain = Some(d);
        self.rel_err = Some(worst);
        worst
    }
}

/// Spec-level name for [`PolyApprox::taylor`].
pub fn taylor_poly<T: Scalar>(g: usize) -> Result<PolyApprox<T>> {
    PolyApprox::taylor(g)
}

pub fn eval_poly<T: Scalar>(p: &PolyApprox<T>, x: T) -> T {
    p.eval(x)
}

pub fn certify<T: Scalar>(p: &mut PolyApprox<T>, half_width: T) -> T {
    p.certify(half_width)
}

/// Smallest even degree in `2..=64` whose Taylor polynomial is certified to
/// relative error `eps_rel` on `[-D, D]`.
pub fn choose_degree<T: Scalar>(eps_rel: T, half_width: T) -> Result<usize> {
    choose_certified(eps_rel, half_width).map(|p| p.degree())
}

/// Like [`choose_degree`] but returns the certified polynomial itself.
pub fn choose_certified<T: Scalar>(eps_rel: T, half_width: T) -> Result<PolyApprox<T>> {
    if !(eps_rel > T::zero() && eps_rel < T::one()) {
        return Err(Error::InvalidArgument(format!("eps_rel must lie in (0, 1), got {eps_rel}")));
    }
    if !(half_width.is_finite() && half_width >= T::zero()) {
        return Err(Error::InvalidArgument(format!("domain must be finite and >= 0, got {half_width}")));
    }
    for g in (2..=MAX_DEGREE).step_by(2) {
        let mut p = PolyApprox::truncated_exp(g);
        if p.certify(half_width) <= eps_rel {
            return Ok(p);
        }
    }
    Err(Error::DegreeOverflow {
        eps: eps_rel.to_f64().unwrap_or(f64::NAN),
        domain: half_width.to_f64().unwrap_or(f64::NAN),
        max_degree: MAX_DEGREE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent oracle: direct series sum and relative error at one point.
    fn series(g: usize, x: f64) -> f64 {
        let mut term = 1.0;
        let mut sum = 1.0;
        for l in 1..=g {
            term *= x / l as f64;
            sum += term;
        }
        sum
    }

    fn grid_oracle(g: usize, d: f64) -> f64 {
        (0..CERTIFY_GRID_POINTS)
            .map(|i| -d + 2.0 * d * i as f64 / (CERTIFY_GRID_POINTS - 1) as f64)
            .map(|x| (series(g, x) / x.exp() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn taylor_coefficients() {
        assert_eq!(taylor_poly::<f64>(0).unwrap().coeffs(), &[1.0]);
        assert_eq!(taylor_poly::<f64>(2).unwrap().coeffs(), &[1.0, 1.0, 0.5]);
        let c4 = taylor_poly::<f64>(4).unwrap();
        let want = [1.0, 1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0];
        for (a, b) in c4.coeffs().iter().zip(want) {
            assert!((a - b).abs() < 1e-16);
        }
        assert!(taylor_poly::<f64>(3).is_err());
    }

    #[test]
    fn eval_examples() {
        let p2 = taylor_poly::<f64>(2).unwrap();
        assert_eq!(p2.eval(0.0), 1.0);
        assert_eq!(p2.eval(6.0), 25.0);
        let p4 = taylor_poly::<f64>(4).unwrap();
        assert!((p4.eval(-1.0) - 0.375).abs() < 1e-15);
    }

    #[test]
    fn certify_examples() {
        let mut p2 = taylor_poly::<f64>(2).unwrap();
        assert_eq!(p2.certify(0.0), 0.0);
        assert_eq!(p2.domain(), Some(0.0));

        let mut p6 = taylor_poly::<f64>(6).unwrap();
        let e6 = p6.certify(1.0);
        assert!(e6 <= 1e-3);
        assert!((e6 - grid_oracle(6, 1.0)).abs() < 1e-12);
        assert!((e6 - 4.787e-4).abs() < 1e-6);

        let e2 = p2.certify(1.0);
        assert!(e2 > 1e-3);
        // Worst point of the quadratic is x = -1: e/2 - 1.
        assert!((e2 - (std::f64::consts::E / 2.0 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn certify_is_sign_symmetric() {
        let mut a = taylor_poly::<f64>(4).unwrap();
        let mut b = a.clone();
        assert_eq!(a.certify(1.3), b.certify(-1.3));
    }

    #[test]
    fn choose_degree_examples() {
        assert_eq!(choose_degree(0.5f64, 0.0).unwrap(), 2);
        // Oracle sweep: g = 2, 4 fail, 6 passes at D = 1.
        assert!(grid_oracle(2, 1.0) > 1e-3);
        assert!(grid_oracle(4, 1.0) > 1e-3);
        assert!(grid_oracle(6, 1.0) <= 1e-3);
        assert_eq!(choose_degree(1e-3f64, 1.0).unwrap(), 6);
        assert!(matches!(choose_degree(1e-3f64, 100.0), Err(Error::DegreeOverflow { .. })));
        assert!(choose_degree(0.0f64, 1.0).is_err());
        assert!(choose_degree(1.0f64, 1.0).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let mut p = taylor_poly::<f32>(8).unwrap();
        assert!(p.certify(1.0) < 1e-4);
    }

    proptest! {
        #[test]
        fn even_truncations_are_positive(half in 1usize..=16, x in -60.0f64..60.0) {
            let p = taylor_poly::<f64>(2 * half).unwrap();
            prop_assert!(p.eval(x) > 0.0);
        }

        #[test]
        fn choose_degree_is_monotone(e1 in 1e-8f64..0.5, e2 in 1e-8f64..0.5, d1 in 0.0f64..4.0, d2 in 0.0f64..4.0) {
            let (lo_eps, hi_eps) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
            let (lo_d, hi_d) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
            let base = choose_degree(hi_eps, lo_d).unwrap();
            prop_assert!(choose_degree(lo_eps, lo_d).unwrap() >= base);
            prop_assert!(choose_degree(hi_eps, hi_d).unwrap() >= base);
        }
    }
}
