//! Exact integer combinatorics over `u128`.

use crate::error::{Error, Result};

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `C(n, k)` by the multiplicative formula, reducing by the gcd before each
/// multiplication so intermediates stay as small as the result allows.
pub fn binomial(n: u128, k: u128) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k {
        // acc * (n - k + i) is divisible by i.
        let num = n - k + i;
        let g = gcd(acc, i);
        let (acc_r, i_r) = (acc / g, i / g);
        acc = acc_r.checked_mul(num / i_r)?;
    }
    Some(acc)
}

/// Number of monomials of degree at most `g` in `w` variables, `C(w + g, g)`.
pub fn tau(w: usize, g: usize) -> Result<u128> {
    binomial(w as u128 + g as u128, g as u128).ok_or_else(|| Error::Overflow(format!("tau({w}, {g})")))
}

/// Binomial coefficients by Pascal's rule, rows `0..=n_max`. Shares no code
/// with [`binomial`].
fn pascal_rows(n_max: usize) -> Option<Vec<Vec<u128>>> {
    let mut rows: Vec<Vec<u128>> = vec![vec![1]];
    for n in 1..=n_max {
        let prev = &rows[n - 1];
        let mut row = vec![1u128; n + 1];
        for k in 1..n {
            row[k] = prev[k - 1].checked_add(prev[k])?;
        }
        rows.push(row);
    }
    Some(rows)
}

/// Checks `sum_{l=0..g} C(w + l - 1, l) == C(w + g, g)` with the two sides
/// computed along unrelated paths (additive Pascal table vs multiplicative
/// formula). For `w = 0` the left side is the single term `C(-1, 0) = 1`.
pub fn tau_identity_check(w: usize, g: usize) -> bool {
    if w == 0 {
        return tau(0, g) == Ok(1);
    }
    let Some(rows) = pascal_rows(w + g) else { return false };
    let mut lhs: u128 = 0;
    for l in 0..=g {
        lhs += rows[w + l - 1][l];
    }
    tau(w, g).is_ok_and(|rhs| lhs == rhs)
}

/// `|alpha|! / prod(alpha_i!)`.
pub fn multinomial(exponents: &[u32]) -> Option<u128> {
    let mut total: u128 = 0;
    let mut acc: u128 = 1;
    for &e in exponents {
        total += e as u128;
        acc = acc.checked_mul(binomial(total, e as u128)?)?;
    }
    Some(acc)
}

/// `C(d, g/2 - 1) * tau(g/2 - 1) / C(d + g, g)`: an upper bound on the fraction
/// of degree-`<= g` monomials whose support has fewer than `g/2` variables.
pub fn halfcover_ratio(d: usize, g: usize) -> Result<f64> {
    let (num, den) = halfcover_terms(d, g)?;
    Ok(num as f64 / den as f64)
}

/// Numerator and denominator of [`halfcover_ratio`] as exact integers.
pub fn halfcover_terms(d: usize, g: usize) -> Result<(u128, u128)> {
    if g < 2 || !g.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("g must be even and >= 2, got {g}")));
    }
    if d < 5 * g {
        return Err(Error::Precondition(format!("d >= 5g required, got d={d} g={g}")));
    }
    let h = (g / 2 - 1) as u128;
    let overflow = || Error::Overflow(format!("halfcover({d}, {g})"));
    let num = binomial(d as u128, h)
        .and_then(|a| a.checked_mul(binomial(h + g as u128, g as u128)?))
        .ok_or_else(overflow)?;
    let den = tau(d, g)?;
    Ok((num, den))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_examples() {
        assert_eq!(tau(2, 2).unwrap(), 6);
        assert_eq!(tau(3, 2).unwrap(), 10);
        assert_eq!(tau(17, 0).unwrap(), 1);
        assert_eq!(tau(0, 5).unwrap(), 1);
        assert_eq!(tau(4, 2).unwrap(), 15);
        assert_eq!(tau(16, 2).unwrap(), 153);
    }

    #[test]
    fn tau_overflow_is_reported() {
        assert!(matches!(tau(400, 200), Err(Error::Overflow(_))));
    }

    #[test]
    fn binomial_against_pascal() {
        let rows = pascal_rows(80).unwrap();
        for n in 0..=80u128 {
            for k in 0..=n {
                assert_eq!(binomial(n, k), Some(rows[n as usize][k as usize]));
            }
        }
        assert_eq!(binomial(3, 5), Some(0));
    }

    #[test]
    fn identity_examples() {
        assert!(tau_identity_check(3, 2));
        assert!(tau_identity_check(1, 5));
        assert!(tau_identity_check(0, 2));
        for w in 1..=12 {
            for g in 0..=8 {
                assert!(tau_identity_check(w, g), "w={w} g={g}");
            }
        }
    }

    #[test]
    fn multinomials() {
        assert_eq!(multinomial(&[]), Some(1));
        assert_eq!(multinomial(&[2, 0]), Some(1));
        assert_eq!(multinomial(&[1, 1]), Some(2));
        assert_eq!(multinomial(&[1, 2, 1]), Some(12));
    }

    #[test]
    fn halfcover_examples() {
        assert!((halfcover_ratio(10, 2).unwrap() - 1.0 / 66.0).abs() < 1e-15);
        assert_eq!(halfcover_terms(20, 4).unwrap(), (100, 10626));
        assert!((halfcover_ratio(20, 4).unwrap() - 0.009410878976096368).abs() < 1e-15);
        assert!(matches!(halfcover_ratio(9, 2), Err(Error::Precondition(_))));
        assert!(halfcover_ratio(30, 3).is_err());
    }
}
