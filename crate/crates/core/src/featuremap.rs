//! Monomial bases and the row expansions that turn `P(q . k)` into a dot
//! product `u(q) . v(k)`.
//!
//! The polynomial coefficients and multinomial factors all live on the q side,
//! so `expand_row_k` is coefficient free.

use crate::combinatorics::{multinomial, tau};
use crate::error::{Error, Result};
use crate::polyapprox::PolyApprox;
use crate::scalar::Scalar;

/// Largest basis [`enumerate_basis`] will materialize.
pub const MAX_BASIS: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial {
    pub exponents: Vec<u32>,
}

impl Monomial {
    pub fn degree(&self) -> usize {
        self.exponents.iter().map(|&e| e as usize).sum()
    }

    /// Number of variables with a positive exponent.
    pub fn support(&self) -> usize {
        self.exponents.iter().filter(|&&e| e > 0).count()
    }

    /// `(variable, exponent)` pairs for the nonzero exponents.
    pub fn factors(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.exponents.iter().enumerate().filter(|(_, &e)| e > 0).map(|(i, &e)| (i, e))
    }

    /// `prod x_i^alpha_i`.
    pub fn eval<T: Scalar>(&self, x: &[T]) -> T {
        self.factors().fold(T::one(), |acc, (i, e)| acc * x[i].powi(e as i32))
    }
}

pub fn support(m: &Monomial) -> usize {
    m.support()
}

/// All monomials in `d` variables of degree at most `g`, in graded
/// lexicographic order: ascending degree, and within a degree the
/// lexicographically larger exponent vector first.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomialBasis {
    d: usize,
    g: usize,
    monomials: Vec<Monomial>,
    multinomials: Vec<u128>,
}

impl MonomialBasis {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn g(&self) -> usize {
        self.g
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn monomials(&self) -> &[Monomial] {
        &self.monomials
    }

    pub fn get(&self, idx: usize) -> &Monomial {
        &self.monomials[idx]
    }

    /// `|alpha|! / prod(alpha_i!)` for each monomial.
    pub fn multinomials(&self) -> &[u128] {
        &self.multinomials
    }
}

/// Pushes every exponent vector of exactly `remaining` total degree over
/// variables `var..d`, larger leading exponents first.
fn compositions(cur: &mut Vec<u32>, var: usize, remaining: u32, out: &mut Vec<Monomial>) {
    let d = cur.len();
    if var + 1 == d {
        cur[var] = remaining;
        out.push(Monomial { exponents: cur.clone() });
        cur[var] = 0;
        return;
    }
    for e in (0..=remaining).rev() {
        cur[var] = e;
        compositions(cur, var + 1, remaining - e, out);
    }
    cur[var] = 0;
}

pub fn enumerate_basis(d: usize, g: usize) -> Result<MonomialBasis> {
    let size = tau(d, g)?;
    if size > MAX_BASIS {
        return Err(Error::Capacity { size, limit: MAX_BASIS });
    }
    let mut monomials = Vec::with_capacity(size as usize);
    if d == 0 {
        monomials.push(Monomial { exponents: Vec::new() });
    } else {
        let mut cur = vec![0u32; d];
        for l in 0..=g as u32 {
            compositions(&mut cur, 0, l, &mut monomials);
        }
    }
    let multinomials = monomials
        .iter()
        .map(|m| multinomial(&m.exponents).ok_or_else(|| Error::Overflow("multinomial".into())))
        .collect::<Result<_>>()?;
    Ok(MonomialBasis { d, g, monomials, multinomials })
}

/// Feature map for a fixed basis and polynomial. `q` rows are scaled by
/// `q_scale` before expansion.
#[derive(Debug, Clone)]
pub struct FeatureMap<T> {
    basis: MonomialBasis,
    weights: Vec<T>,
    q_scale: T,
}

impl<T: Scalar> FeatureMap<T> {
    pub fn new(basis: MonomialBasis, poly: &PolyApprox<T>, q_scale: T) -> Result<Self> {
        if poly.degree() != basis.g() {
            return Err(Error::InvalidArgument(format!(
                "polynomial degree {} does not match basis degree {}",
                poly.degree(),
                basis.g()
            )));
        }
        let c = poly.coeffs();
        let weights = basis
            .monomials()
            .iter()
            .zip(basis.multinomials())
            .map(|(m, &mult)| c[m.degree()] * T::of(mult as f64))
            .collect();
        Ok(Self { basis, weights, q_scale })
    }

    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn q_scale(&self) -> T {
        self.q_scale
    }

    /// Entry `idx` of the q-side expansion of an (unscaled) row.
    pub fn q_entry(&self, q: &[T], idx: usize) -> T {
        let m = self.basis.get(idx);
        let s = self.q_scale;
        let prod = m.factors().fold(T::one(), |acc, (i, e)| acc * (q[i] * s).powi(e as i32));
        self.weights[idx] * prod
    }

    pub fn k_entry(&self, k: &[T], idx: usize) -> T {
        self.basis.get(idx).eval(k)
    }

    pub fn q_row(&self, q: &[T]) -> Vec<T> {
        (0..self.len()).map(|c| self.q_entry(q, c)).collect()
    }

    pub fn k_row(&self, k: &[T]) -> Vec<T> {
        (0..self.len()).map(|c| self.k_entry(k, c)).collect()
    }
}

fn check_len(len: usize, basis: &MonomialBasis) -> Result<()> {
    if len != basis.d() {
        return Err(Error::ShapeMismatch { left: format!("row of length {len}"), right: format!("basis over {} variables", basis.d()) });
    }
    Ok(())
}

/// `c_|alpha| * multinomial(alpha) * q^alpha` for each basis monomial.
pub fn expand_row_q<T: Scalar>(q: &[T], poly: &PolyApprox<T>, basis: &MonomialBasis) -> Result<Vec<T>> {
    check_len(q.len(), basis)?;
    Ok(FeatureMap::new(basis.clone(), poly, T::one())?.q_row(q))
}

/// `k^alpha` for each basis monomial.
pub fn expand_row_k<T: Scalar>(k: &[T], basis: &MonomialBasis) -> Result<Vec<T>> {
    check_len(k.len(), basis)?;
    Ok(basis.monomials().iter().map(|m| m.eval(k)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combinatorics::halfcover_ratio;
    use crate::polyapprox::taylor_poly;
    use proptest::prelude::*;

    fn exps(b: &MonomialBasis) -> Vec<Vec<u32>> {
        b.monomials().iter().map(|m| m.exponents.clone()).collect()
    }

    #[test]
    fn basis_examples() {
        assert_eq!(exps(&enumerate_basis(1, 2).unwrap()), vec![vec![0], vec![1], vec![2]]);
        assert_eq!(exps(&enumerate_basis(2, 1).unwrap()), vec![vec![0, 0], vec![1, 0], vec![0, 1]]);
        let b = enumerate_basis(2, 2).unwrap();
        assert_eq!(b.monomials().iter().map(Monomial::degree).collect::<Vec<_>>(), vec![0, 1, 1, 2, 2, 2]);
        assert_eq!(exps(&b)[3..], [vec![2, 0], vec![1, 1], vec![0, 2]]);
        // Graded lex puts x*y between x^2 and y^2.
        assert_eq!(b.monomials().iter().map(support).collect::<Vec<_>>(), vec![0, 1, 1, 1, 2, 1]);
    }

    #[test]
    fn support_examples() {
        assert_eq!(Monomial { exponents: vec![0, 0, 0] }.support(), 0);
        assert_eq!(Monomial { exponents: vec![1, 0, 2] }.support(), 2);
    }

    #[test]
    fn basis_len_matches_tau() {
        for d in 1..=7 {
            for g in 0..=5 {
                let b = enumerate_basis(d, g).unwrap();
                assert_eq!(b.len() as u128, tau(d, g).unwrap());
                let mut seen = std::collections::HashSet::new();
                assert!(b.monomials().iter().all(|m| seen.insert(m.clone())));
            }
        }
    }

    #[test]
    fn capacity_guard() {
        assert!(matches!(enumerate_basis(200, 6), Err(Error::Capacity { .. })));
    }

    #[test]
    fn expand_q_examples() {
        let b1 = enumerate_basis(1, 2).unwrap();
        let p2 = taylor_poly::<f64>(2).unwrap();
        assert_eq!(expand_row_q(&[2.0], &p2, &b1).unwrap(), vec![1.0, 2.0, 2.0]);
        assert_eq!(expand_row_q(&[0.0], &p2, &b1).unwrap(), vec![1.0, 0.0, 0.0]);
        let b2 = enumerate_basis(2, 1).unwrap();
        let p1 = PolyApprox::<f64>::truncated_exp(1);
        assert_eq!(expand_row_q(&[3.0, -1.0], &p1, &b2).unwrap(), vec![1.0, 3.0, -1.0]);
        assert!(expand_row_q(&[3.0], &p1, &b2).is_err());
    }

    #[test]
    fn expand_k_examples() {
        let b1 = enumerate_basis(1, 2).unwrap();
        assert_eq!(expand_row_k(&[3.0f64], &b1).unwrap(), vec![1.0, 3.0, 9.0]);
        assert_eq!(expand_row_k(&[0.0f64], &b1).unwrap(), vec![1.0, 0.0, 0.0]);
        let b2 = enumerate_basis(2, 2).unwrap();
        assert_eq!(expand_row_k(&[1.0f64, 1.0], &b2).unwrap(), vec![1.0; 6]);
    }

    #[test]
    fn halfcover_count_matches_bound() {
        let mut worst: f64 = 0.0;
        for (d, g) in [(10, 2), (11, 2), (14, 2), (20, 4), (22, 4)] {
            let b = enumerate_basis(d, g).unwrap();
            let wide = b.monomials().iter().filter(|m| m.support() >= g / 2).count();
            let ratio = halfcover_ratio(d, g).unwrap();
            assert!(ratio < 1.0);
            assert!(wide as f64 >= (1.0 - ratio) * b.len() as f64, "d={d} g={g}");
            worst = worst.max(ratio);
        }
        println!("max observed half-cover ratio: {worst:.6}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn bilinear_identity(d in 1usize..=6, half in 1usize..=2, seed in any::<u64>()) {
            let g = 2 * half;
            let basis = enumerate_basis(d, g).unwrap();
            let p = taylor_poly::<f64>(g).unwrap();
            let q = crate::problem::uniform_matrix::<f64>(1, d, 1.0, seed, 0);
            let k = crate::problem::uniform_matrix::<f64>(1, d, 1.0, seed, 1);
            let dot: f64 = q.row(0).iter().zip(k.row(0)).map(|(a, b)| a * b).sum();
            let want = p.eval(dot);
            let u = expand_row_q(q.row(0), &p, &basis).unwrap();
            let v = expand_row_k(k.row(0), &basis).unwrap();
            let got: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
            prop_assert!((got - want).abs() <= 1e-9 * (1.0 + want.abs()));
        }
    }
}
