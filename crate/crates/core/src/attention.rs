//! Exact softmax attention and its polynomial approximation.
//!
//! Approximation error budget: if every score `exp(s)` is replaced by a
//! `p = exp(s)(1 + e)` with `|e| <= eps_poly`, each normalized weight moves by
//! at most `2 eps_poly / (1 - eps_poly)`, and an output entry, being a convex
//! combination of V entries, moves by at most that times `max|V|`. Taking
//! `eps_poly = eps / (4 (1 + max|V|))` keeps the total under `eps` with the
//! factor 4 covering the `1 / (1 - eps_poly)` slack.

use crate::error::{Error, Result};
use crate::featuremap::{enumerate_basis, FeatureMap};
use crate::matrix::{matmul_ref, Matrix};
use crate::polyapprox::{choose_certified, PolyApprox};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionResult<T> {
    pub output: Matrix<T>,
    /// Softmax denominators (exact) or `U1 (U2^T 1)` (approximate).
    pub row_sums: Vec<T>,
}

fn check_finite<T: Scalar>(m: &Matrix<T>, what: &'static str) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

fn check_shapes<T: Scalar>(q: &Matrix<T>, k: &Matrix<T>, v: &Matrix<T>) -> Result<()> {
    if q.cols() != k.cols() || k.rows() != v.rows() {
        return Err(Error::ShapeMismatch {
            left: format!("Q {}x{}, K {}x{}", q.rows(), q.cols(), k.rows(), k.cols()),
            right: format!("V {}x{}", v.rows(), v.cols()),
        });
    }
    if k.rows() == 0 || q.cols() == 0 {
        return Err(Error::InvalidArgument("attention needs at least one key and one feature".into()));
    }
    check_finite(q, "Q")?;
    check_finite(k, "K")?;
    check_finite(v, "V")
}

/// `softmax(Q K^T / sqrt(d)) V` with row-wise max subtraction.
///
/// Q may have a different row count than K and V. Row sums are reported in
/// unshifted units, `sum_j exp(s_ij)`, saturating when that is not
/// representable.
pub fn exact_attention<T: Scalar>(q: &Matrix<T>, k: &Matrix<T>, v: &Matrix<T>) -> Result<AttentionResult<T>> {
    check_shapes(q, k, v)?;
    let inv_sqrt_d = T::one() / T::of_usize(q.cols()).sqrt();
    let (m, n, e) = (q.rows(), k.rows(), v.cols());
    let mut output = Matrix::zeros(m, e);
    let mut row_sums = Vec::with_capacity(m);
    let mut scores = vec![T::zero(); n];
    for i in 0..m {
        let qi = q.row(i);
        for (j, s) in scores.iter_mut().enumerate() {
            *s = qi.iter().zip(k.row(j)).map(|(&a, &b)| a * b).sum::<T>() * inv_sqrt_d;
        }
        let mx = scores.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let mut sum = T::zero();
        for s in scores.iter_mut() {
            *s = (*s - mx).exp();
            sum += *s;
        }
        for (j, &p) in scores.iter().enumerate() {
            let w = p / sum;
            for c in 0..e {
                output[(i, c)] += w * v[(j, c)];
            }
        }
        let unshifted = sum * mx.exp();
        row_sums.push(if unshifted.is_finite() && unshifted > T::zero() {
            unshifted
        } else if mx > T::zero() {
            T::max_value()
        } else {
            T::min_positive_value()
        });
    }
    Ok(AttentionResult { output, row_sums })
}

/// Everything the approximate pipeline fixes before touching V rows.
#[derive(Debug, Clone)]
pub struct ApproxPlan<T> {
    pub poly: PolyApprox<T>,
    pub features: FeatureMap<T>,
    /// Bound on `|q . k| / sqrt(d)`.
    pub score_bound: T,
    pub eps_poly: T,
}

/// Picks the certified degree and builds the feature map for inputs with
/// `max(|Q|, |K|) = B` and `max|V| = vmax`.
pub fn plan_approx<T: Scalar>(d: usize, bound: T, vmax: T, eps: T) -> Result<ApproxPlan<T>> {
    if !(eps > T::zero() && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let sqrt_d = T::of_usize(d).sqrt();
    let score_bound = sqrt_d * bound * bound;
    let eps_poly = (eps / (T::of(4.0) * (T::one() + vmax))).min(T::of(0.5));
    let poly = match choose_certified(eps_poly, score_bound) {
        Ok(p) => p,
        Err(Error::DegreeOverflow { .. }) => {
            return Err(Error::EntriesTooLarge { score_bound: score_bound.to_f64().unwrap_or(f64::NAN) })
        }
        Err(e) => return Err(e),
    };
    let basis = enumerate_basis(d, poly.degree())?;
    let features = FeatureMap::new(basis, &poly, T::one() / sqrt_d)?;
    Ok(ApproxPlan { poly, features, score_bound, eps_poly })
}

/// `U1` (q side, scaled and coefficient folded) and `U2` (k side).
pub fn feature_matrices<T: Scalar>(fm: &FeatureMap<T>, q: &Matrix<T>, k: &Matrix<T>) -> (Matrix<T>, Matrix<T>) {
    let r = fm.len();
    let mut u1 = Matrix::zeros(q.rows(), r);
    for i in 0..q.rows() {
        for (c, x) in fm.q_row(q.row(i)).into_iter().enumerate() {
            u1[(i, c)] = x;
        }
    }
    let mut u2 = Matrix::zeros(k.rows(), r);
    for i in 0..k.rows() {
        for (c, x) in fm.k_row(k.row(i)).into_iter().enumerate() {
            u2[(i, c)] = x;
        }
    }
    (u1, u2)
}

/// Additive-error approximate attention. `H = U2^T V` is formed first, then
/// `U1 H`, so no `n x n` matrix appears.
pub fn approx_attention<T: Scalar>(q: &Matrix<T>, k: &Matrix<T>, v: &Matrix<T>, eps: T) -> Result<AttentionResult<T>> {
    check_shapes(q, k, v)?;
    let bound = q.max_abs().max(k.max_abs());
    let plan = plan_approx(q.cols(), bound, v.max_abs(), eps)?;
    let (u1, u2) = feature_matrices(&plan.features, q, k);
    let u2t = u2.transpose();
    let h = matmul_ref(&u2t, v)?;
    let numer = matmul_ref(&u1, &h)?;
    let col_sums = Matrix::from_fn(u2t.rows(), 1, |c, _| u2t.row(c).iter().copied().sum());
    let denom = matmul_ref(&u1, &col_sums)?;
    let mut output = numer;
    let mut row_sums = Vec::with_capacity(q.rows());
    for i in 0..q.rows() {
        let s = denom[(i, 0)];
        // Written so that NaN also fails.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(s > T::zero()) {
            return Err(Error::Positivity { row: i });
        }
        for c in 0..output.cols() {
            output[(i, c)] /= s;
        }
        row_sums.push(s);
    }
    check_finite(&output, "approximate output")?;
    Ok(AttentionResult { output, row_sums })
}

/// Largest `|x|` accepted by [`exp_via_attention`].
pub const EXP_GUARD: f64 = 30.0;

/// Recovers `exp(x)` from a two-key attention: with `Q = [1]`, keys `x` and
/// `2x` and values `1, 0`, the output is `1 / (1 + e^x)`.
pub fn exp_via_attention<T: Scalar>(x: T) -> Result<T> {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(x.abs() <= T::of(EXP_GUARD)) {
        return Err(Error::InvalidArgument(format!("|x| must be <= {EXP_GUARD}, got {x}")));
    }
    let q = Matrix::new(1, 1, vec![T::one()])?;
    let k = Matrix::new(2, 1, vec![x, x + x])?;
    let v = Matrix::new(2, 1, vec![T::one(), T::zero()])?;
    let a = exact_attention(&q, &k, &v)?.output[(0, 0)];
    Ok(T::one() / a - T::one())
}
