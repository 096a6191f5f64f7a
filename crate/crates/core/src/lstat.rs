//! Exact weights on order statistics, and their jackknife extensions.
//!
//! An L-statistic on `n` observations is `sum_p w_p x'_p` where `x'_p` is the
//! p-th smallest value. Deleting the j-th smallest of `n + 1` points maps the
//! remaining order statistic at position `k` to position `k` if `k < j` and
//! `k + 1` otherwise, so the extension of an L-statistic is again an
//! L-statistic with weights
//!
//! ```text
//! w'_p = ((n + 1 - p) w_p + (p - 1) w_{p-1}) / (n + 1),   w_0 = w_{n+1} = 0.
//! ```

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::scalar::{fraction, rational, Rational, Scalar};
use crate::ustat::Sample;

/// Exact weights `w_1..w_n` summing to one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LWeights {
    w: Vec<Rational>,
}

impl LWeights {
    pub fn new(w: Vec<Rational>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidArgument("weights need at least one position".into()));
        }
        let total: Rational = w.iter().cloned().sum();
        if !total.is_one() {
            return Err(Error::InvalidArgument(format!(
                "weights sum to {}, not 1",
                fraction(&total)
            )));
        }
        Ok(LWeights { w })
    }

    pub fn n(&self) -> usize {
        self.w.len()
    }

    pub fn weights(&self) -> &[Rational] {
        &self.w
    }

    /// 1-based position access, as order statistics are usually numbered.
    pub fn at(&self, p: usize) -> &Rational {
        &self.w[p - 1]
    }

    pub fn is_centrally_symmetric(&self) -> bool {
        let n = self.w.len();
        (0..n / 2).all(|i| self.w[i] == self.w[n - 1 - i])
    }

    pub fn to_fractions(&self) -> Vec<String> {
        self.w.iter().map(fraction).collect()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.w.iter().map(Scalar::to_f64).collect()
    }

    /// Sorted weighted sum; works for any [`Scalar`].
    pub fn eval_generic<T: Scalar>(&self, xs: &[T]) -> T {
        let mut sorted = xs.to_vec();
        sorted.sort_by(T::total_cmp);
        T::sum_of(
            self.w
                .iter()
                .zip(sorted)
                .filter(|(w, _)| !w.is_zero())
                .map(|(w, x)| T::from_rational(w) * x),
        )
    }
}

/// Sample median weights: unit weight in the middle for odd `n`, halves on
/// positions `n/2` and `n/2 + 1` for even `n`.
pub fn median_weights(n: usize) -> Result<LWeights> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let mut w = vec![Rational::zero(); n];
    if n % 2 == 1 {
        w[n / 2] = Rational::one();
    } else {
        w[n / 2 - 1] = rational(1, 2);
        w[n / 2] = rational(1, 2);
    }
    LWeights::new(w)
}

/// Uniform weights `1/n` (the sample mean).
pub fn mean_weights(n: usize) -> Result<LWeights> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    LWeights::new(vec![rational(1, n as i64); n])
}

/// Weights of the jackknife extension from `n` to `n + 1` observations.
pub fn extend_weights(lw: &LWeights) -> LWeights {
    let n = lw.n();
    let denom = Rational::from_integer((n as i64 + 1).into());
    let w = (1..=n + 1)
        .map(|p| {
            let keep = if p <= n {
                lw.w[p - 1].clone() * Rational::from_integer(((n + 1 - p) as i64).into())
            } else {
                Rational::zero()
            };
            let shifted = if p >= 2 {
                lw.w[p - 2].clone() * Rational::from_integer(((p - 1) as i64).into())
            } else {
                Rational::zero()
            };
            (keep + shifted) / denom.clone()
        })
        .collect();
    LWeights { w }
}

/// Repeated [`extend_weights`] up to `target` observations.
pub fn chain_weights(start: &LWeights, target: usize) -> Result<LWeights> {
    if target < start.n() {
        return Err(Error::InvalidArgument(format!(
            "target {target} is below the starting size {}",
            start.n()
        )));
    }
    let mut lw = start.clone();
    while lw.n() < target {
        lw = extend_weights(&lw);
    }
    Ok(lw)
}

/// Outcome of comparing the extended even median with the
/// `((m+1)/2, m, (m+1)/2) / (2m+1)` pattern.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConjectureCheck {
    pub m: usize,
    pub weights: LWeights,
    pub expected: Vec<Rational>,
    pub matches: bool,
}

/// Extends the median of `2m` observations to `2m + 1` and compares with
/// weight `(m+1)/(2(2m+1))` at positions `m` and `m + 2` and `m/(2m+1)` at
/// `m + 1`.
pub fn conjecture16_check(m: usize) -> Result<ConjectureCheck> {
    if m == 0 {
        return Err(Error::InvalidArgument("m must be at least 1".into()));
    }
    let weights = extend_weights(&median_weights(2 * m)?);
    let n1 = 2 * m as i64 + 1;
    let mut expected = vec![Rational::zero(); 2 * m + 1];
    expected[m - 1] = rational(m as i64 + 1, 2 * n1);
    expected[m] = rational(m as i64, n1);
    expected[m + 1] = rational(m as i64 + 1, 2 * n1);
    let matches = weights.w == expected;
    Ok(ConjectureCheck {
        m,
        weights,
        expected,
        matches,
    })
}

/// `sum_p w_p x'_p` on the sorted sample (stable sort; ties keep order).
pub fn eval_lstat(lw: &LWeights, sample: &Sample) -> Result<f64> {
    if sample.len() != lw.n() {
        return Err(Error::LengthMismatch {
            expected: lw.n(),
            got: sample.len(),
        });
    }
    Ok(lw.eval_generic::<f64>(sample.values()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(p: i64, q: i64) -> Rational {
        rational(p, q)
    }

    fn lw(v: &[(i64, i64)]) -> LWeights {
        LWeights::new(v.iter().map(|&(p, q)| r(p, q)).collect()).unwrap()
    }

    #[test]
    fn median_weight_examples() {
        assert_eq!(median_weights(3).unwrap(), lw(&[(0, 1), (1, 1), (0, 1)]));
        assert_eq!(median_weights(4).unwrap(), lw(&[(0, 1), (1, 2), (1, 2), (0, 1)]));
        assert_eq!(median_weights(1).unwrap(), lw(&[(1, 1)]));
        assert!(median_weights(0).is_err());
    }

    #[test]
    fn weights_must_sum_to_one() {
        assert!(LWeights::new(vec![r(1, 2), r(1, 3)]).is_err());
        assert!(LWeights::new(vec![]).is_err());
    }

    #[test]
    fn extend_weight_examples() {
        assert_eq!(extend_weights(&lw(&[(1, 2), (1, 2)])), lw(&[(1, 3), (1, 3), (1, 3)]));
        assert_eq!(
            extend_weights(&median_weights(4).unwrap()),
            lw(&[(0, 1), (3, 10), (2, 5), (3, 10), (0, 1)])
        );
        assert_eq!(
            extend_weights(&median_weights(6).unwrap()),
            lw(&[(0, 1), (0, 1), (2, 7), (3, 7), (2, 7), (0, 1), (0, 1)])
        );
    }

    #[test]
    fn conjecture_small_cases() {
        let c2 = conjecture16_check(2).unwrap();
        assert!(c2.matches);
        assert_eq!(c2.weights.to_fractions(), ["0/1", "3/10", "2/5", "3/10", "0/1"]);
        assert!(conjecture16_check(3).unwrap().matches);
        assert!(conjecture16_check(1).unwrap().matches);
    }

    #[test]
    fn chain_weight_examples() {
        assert_eq!(chain_weights(&lw(&[(1, 1)]), 5).unwrap(), mean_weights(5).unwrap());
        // odd median of 3 extended once: halves on the two middle positions
        assert_eq!(
            chain_weights(&median_weights(3).unwrap(), 4).unwrap(),
            lw(&[(0, 1), (1, 2), (1, 2), (0, 1)])
        );
        // frozen from brute-force leave-one-out enumeration
        assert_eq!(
            chain_weights(&median_weights(4).unwrap(), 6).unwrap(),
            lw(&[(0, 1), (1, 5), (3, 10), (3, 10), (1, 5), (0, 1)])
        );
        assert!(chain_weights(&median_weights(4).unwrap(), 3).is_err());
    }

    #[test]
    fn eval_examples() {
        let s = |v: &[f64]| Sample::new(v.to_vec()).unwrap();
        assert_eq!(eval_lstat(&median_weights(4).unwrap(), &s(&[4.0, 1.0, 3.0, 2.0])).unwrap(), 2.5);
        let ext = extend_weights(&median_weights(4).unwrap());
        assert_eq!(eval_lstat(&ext, &s(&[1.0, 2.0, 3.0, 4.0, 5.0])).unwrap(), 3.0);
        assert_eq!(eval_lstat(&mean_weights(3).unwrap(), &s(&[9.0, 0.0, 3.0])).unwrap(), 4.0);
        assert!(eval_lstat(&mean_weights(3).unwrap(), &s(&[1.0])).is_err());
    }

    proptest::proptest! {
        #[test]
        fn extension_preserves_sum_and_symmetry(n in 1usize..40, k in 0usize..6) {
            let start = median_weights(n).unwrap();
            let out = chain_weights(&start, n + k).unwrap();
            let total: Rational = out.weights().iter().cloned().sum();
            proptest::prop_assert!(total.is_one());
            proptest::prop_assert!(out.is_centrally_symmetric());
        }
    }
}
