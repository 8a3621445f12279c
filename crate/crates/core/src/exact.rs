//! Exact integer and rational arithmetic for sampling combinatorics.
//!
//! The batch-sampling distributions in this crate are ratios of binomial
//! coefficients. They are computed exactly so that equality tests between
//! formula and enumeration oracle are true equalities, not tolerances.

use num_rational::Ratio;

use crate::error::{Error, Result};

/// Exact rational number backed by 128-bit integers.
///
/// Large enough for every quantity in this crate: the largest denominators
/// are squares of binomial coefficients with n ≤ 64.
pub type Rational = Ratio<i128>;

/// Largest `n` for which [`binomial`] is guaranteed exact in `i128`.
pub const MAX_BINOMIAL_N: u64 = 64;

/// Exact binomial coefficient C(n, k).
///
/// Returns zero for `k > n` (the standard combinatorial convention); errors
/// only when `n` exceeds [`MAX_BINOMIAL_N`], the bound under which all
/// intermediates provably fit in `i128`.
pub fn binomial(n: u64, k: u64) -> Result<i128> {
    if n > MAX_BINOMIAL_N {
        return Err(Error::TooLarge(format!(
            "binomial coefficient requested for n = {n}, exact arithmetic is bounded at n = {MAX_BINOMIAL_N}"
        )));
    }
    if k > n {
        return Ok(0);
    }
    Ok(num_integer::binomial(n as i128, k as i128))
}

/// Exact rational `1 / C(n, k)`: the probability of any particular
/// k-subset under uniform without-replacement sampling from n items.
pub fn inverse_binomial(n: u64, k: u64) -> Result<Rational> {
    if k > n {
        return Err(Error::Input(format!(
            "subset size k = {k} exceeds population n = {n}"
        )));
    }
    Ok(Rational::new(1, binomial(n, k)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_binomials() {
        assert_eq!(binomial(5, 2).unwrap(), 10);
        assert_eq!(binomial(5, 0).unwrap(), 1);
        assert_eq!(binomial(5, 5).unwrap(), 1);
        assert_eq!(binomial(0, 0).unwrap(), 1);
        assert_eq!(binomial(30, 5).unwrap(), 142_506);
        assert_eq!(binomial(4, 7).unwrap(), 0);
    }

    #[test]
    fn central_binomial_at_bound() {
        // C(64, 32), the largest value this crate ever needs.
        assert_eq!(binomial(64, 32).unwrap(), 1_832_624_140_942_590_534);
    }

    #[test]
    fn too_large_is_rejected() {
        assert!(matches!(binomial(65, 1), Err(Error::TooLarge(_))));
    }

    #[test]
    fn pascal_identity_holds() {
        for n in 1..=20u64 {
            for k in 1..=n {
                let lhs = binomial(n, k).unwrap();
                let rhs = binomial(n - 1, k - 1).unwrap() + binomial(n - 1, k).unwrap();
                assert_eq!(lhs, rhs, "Pascal identity failed at ({n}, {k})");
            }
        }
    }

    #[test]
    fn inverse_binomial_examples() {
        assert_eq!(inverse_binomial(5, 2).unwrap(), Rational::new(1, 10));
        assert_eq!(inverse_binomial(7, 7).unwrap(), Rational::new(1, 1));
        assert_eq!(inverse_binomial(30, 5).unwrap(), Rational::new(1, 142_506));
        assert!(matches!(inverse_binomial(3, 4), Err(Error::Input(_))));
    }
}
