//! Exact expectations and variances over finite-support distributions by
//! enumerating every outcome tuple in rational arithmetic.

use num_traits::{One, Signed, Zero};

use crate::combin::binomial;
use crate::error::{Error, Result};
use crate::exec::{chunk_count, map_indexed, Parallelism, CHUNK};
use crate::kernels::Kernel;
use crate::scalar::{Rational, Scalar};
use crate::ustat::Estimator;

/// Largest number of outcome tuples a single enumeration visits.
pub const MAX_STATES: u64 = 10_000_000;

/// A distribution on finitely many atoms with exact probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDist {
    atoms: Vec<(Rational, Rational)>,
}

impl FiniteDist {
    /// `atoms` are `(value, probability)`; probabilities must be strictly
    /// positive and sum to exactly one.
    pub fn new(atoms: Vec<(Rational, Rational)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidArgument("distribution needs at least one atom".into()));
        }
        if atoms.iter().any(|(_, p)| !p.is_positive()) {
            return Err(Error::InvalidArgument("atom probabilities must be positive".into()));
        }
        let total: Rational = atoms.iter().map(|(_, p)| p.clone()).sum();
        if !total.is_one() {
            return Err(Error::InvalidArgument("atom probabilities must sum to 1".into()));
        }
        Ok(FiniteDist { atoms })
    }

    /// `P(X = 1) = p`, `P(X = 0) = 1 - p`.
    pub fn two_point(p: Rational) -> Result<Self> {
        let q = Rational::one() - p.clone();
        Self::new(vec![(Rational::zero(), q), (Rational::one(), p)])
    }

    /// Uniform over the given values.
    pub fn uniform(values: Vec<Rational>) -> Result<Self> {
        let s = values.len() as u128;
        let p = Rational::one() / Rational::from_u128(s);
        Self::new(values.into_iter().map(|v| (v, p.clone())).collect())
    }

    pub fn size(&self) -> usize {
        self.atoms.len()
    }

    pub fn atoms(&self) -> &[(Rational, Rational)] {
        &self.atoms
    }

    pub fn mean(&self) -> Rational {
        self.atoms.iter().map(|(v, p)| v.clone() * p.clone()).sum()
    }

    pub fn variance(&self) -> Rational {
        let mu = self.mean();
        self.atoms
            .iter()
            .map(|(v, p)| {
                let d = v.clone() - mu.clone();
                d.clone() * d * p.clone()
            })
            .sum()
    }
}

/// A function of a fixed number of observations that can be evaluated
/// exactly on rational atoms.
pub trait Statistic: Sync {
    fn arity(&self) -> usize;
    fn eval_exact(&self, xs: &[Rational]) -> Rational;
}

impl Statistic for Kernel {
    fn arity(&self) -> usize {
        Kernel::arity(self)
    }

    fn eval_exact(&self, xs: &[Rational]) -> Rational {
        self.eval_generic(xs)
    }
}

impl Statistic for Estimator {
    fn arity(&self) -> usize {
        Estimator::arity(self)
    }

    fn eval_exact(&self, xs: &[Rational]) -> Rational {
        self.eval_generic(xs)
    }
}

fn state_count(s: usize, n: usize) -> Result<u64> {
    let count = (s as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if count > u128::from(MAX_STATES) {
        return Err(Error::StateSpaceTooLarge {
            count,
            limit: MAX_STATES,
        });
    }
    Ok(count as u64)
}

/// `sum_tuples P(tuple) * f(tuple)` over all `s^n` tuples, each entry of the
/// returned vector accumulating one component of `f`. Enumeration is a
/// mixed-radix counter split into fixed chunks.
fn enumerate<const K: usize>(
    dist: &FiniteDist,
    n: usize,
    par: Parallelism,
    f: impl Fn(&[Rational]) -> [Rational; K] + Sync + Send,
) -> Result<[Rational; K]> {
    let s = dist.size();
    let total = state_count(s, n)? as usize;
    let partials = map_indexed(chunk_count(total, CHUNK), par, |c| {
        let start = c * CHUNK;
        let len = CHUNK.min(total - start);
        let mut digits = vec![0usize; n];
        let mut rest = start;
        for d in digits.iter_mut().rev() {
            *d = rest % s;
            rest /= s;
        }
        let mut acc: [Rational; K] = std::array::from_fn(|_| Rational::zero());
        let mut values = vec![Rational::zero(); n];
        for step in 0..len {
            let mut prob = Rational::one();
            for (v, &d) in values.iter_mut().zip(&digits) {
                *v = dist.atoms[d].0.clone();
                prob *= &dist.atoms[d].1;
            }
            let out = f(&values);
            for (a, o) in acc.iter_mut().zip(out) {
                *a += prob.clone() * o;
            }
            if step + 1 < len {
                for d in digits.iter_mut().rev() {
                    *d += 1;
                    if *d < s {
                        break;
                    }
                    *d = 0;
                }
            }
        }
        acc
    });
    let mut acc: [Rational; K] = std::array::from_fn(|_| Rational::zero());
    for p in partials {
        for (a, v) in acc.iter_mut().zip(p) {
            *a += v;
        }
    }
    Ok(acc)
}

fn check_arity(stat: &impl Statistic, n: usize) -> Result<()> {
    if stat.arity() != n {
        return Err(Error::LengthMismatch {
            expected: stat.arity(),
            got: n,
        });
    }
    Ok(())
}

/// Exact `E[stat(X_1..X_n)]` for iid draws from `dist`.
pub fn exact_mean(stat: &impl Statistic, dist: &FiniteDist, n: usize) -> Result<Rational> {
    check_arity(stat, n)?;
    let [m] = enumerate(dist, n, Parallelism::default(), |xs| [stat.eval_exact(xs)])?;
    Ok(m)
}

/// Exact mean and variance in one enumeration.
pub fn exact_moments(stat: &impl Statistic, dist: &FiniteDist, n: usize) -> Result<(Rational, Rational)> {
    check_arity(stat, n)?;
    let [m1, m2] = enumerate(dist, n, Parallelism::default(), |xs| {
        let v = stat.eval_exact(xs);
        [v.clone(), v.clone() * v]
    })?;
    let var = m2 - m1.clone() * m1.clone();
    Ok((m1, var))
}

pub fn exact_var(stat: &impl Statistic, dist: &FiniteDist, n: usize) -> Result<Rational> {
    exact_moments(stat, dist, n).map(|(_, v)| v)
}

/// `E[kernel(fixed, X_{k+1}, .., X_m)]`.
pub fn exact_projection(kernel: &Kernel, dist: &FiniteDist, fixed: &[Rational]) -> Result<Rational> {
    let m = kernel.arity();
    let k = fixed.len();
    if k > m {
        return Err(Error::InvalidArgument(format!("{k} fixed arguments for arity {m}")));
    }
    let [g] = enumerate(dist, m - k, Parallelism::Sequential, |rest| {
        let mut args = fixed.to_vec();
        args.extend_from_slice(rest);
        [kernel.eval_generic(&args)]
    })?;
    Ok(g)
}

/// Exact variance of the conditional projection given `k` arguments.
pub fn exact_vk(kernel: &Kernel, dist: &FiniteDist, k: usize) -> Result<Rational> {
    let m = kernel.arity();
    if k == 0 || k > m {
        return Err(Error::InvalidArgument(format!("k = {k} outside 1..={m}")));
    }
    state_count(dist.size(), m)?;
    let [g1, g2] = enumerate(dist, k, Parallelism::default(), |fixed| {
        let g = exact_projection(kernel, dist, fixed).expect("guarded above");
        [g.clone(), g.clone() * g]
    })?;
    Ok(g2 - g1.clone() * g1)
}

/// Hoeffding's variance of the U-statistic on `n` observations from exact
/// projection variances `v_1..v_m`.
pub fn hoeffding_variance<T: Scalar>(n: usize, v: &[T]) -> Result<T> {
    let m = v.len();
    if n < m {
        return Err(Error::SampleTooShort { len: n, arity: m });
    }
    let c = |a: usize, b: usize| -> T { T::from_u128(binomial(a as u64, b as u64).unwrap_or(0)) };
    let terms = (1..=m).map(|k| c(m, k) * c(n - m, m - k) * v[k - 1].clone());
    Ok(T::sum_of(terms.collect::<Vec<_>>()) / c(n, m))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoeffdingFormulaCheck {
    pub formula_value: Rational,
    pub enumerated_value: Rational,
    pub equal: bool,
}

/// Compares Hoeffding's formula (with exact `v_k`) against the enumerated
/// variance of the U-statistic on `n` draws.
pub fn verify_eq5(kernel: &Kernel, dist: &FiniteDist, n: usize) -> Result<HoeffdingFormulaCheck> {
    let m = kernel.arity();
    let v = (1..=m)
        .map(|k| exact_vk(kernel, dist, k))
        .collect::<Result<Vec<_>>>()?;
    let formula_value = hoeffding_variance(n, &v)?;
    let ustat = Estimator::u_statistic(kernel.clone(), n)?;
    let enumerated_value = exact_var(&ustat, dist, n)?;
    let equal = formula_value == enumerated_value;
    Ok(HoeffdingFormulaCheck {
        formula_value,
        enumerated_value,
        equal,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactVarianceDrop {
    /// `(n + 1) var(extension on n + 1 draws)`.
    pub lhs: Rational,
    /// `n var(estimator on n draws)`.
    pub rhs: Rational,
    pub holds: bool,
}

impl ExactVarianceDrop {
    pub fn margin(&self) -> Rational {
        self.rhs.clone() - self.lhs.clone()
    }
}

/// Exact check of `(n+1) var(extension) <= n var(estimator)`.
pub fn verify_variance_drop(estimator: &Estimator, dist: &FiniteDist) -> Result<ExactVarianceDrop> {
    let n = estimator.arity();
    let ext = estimator.extend();
    state_count(dist.size(), n + 1)?;
    let base_var = exact_var(estimator, dist, n)?;
    let ext_var = exact_var(&ext, dist, n + 1)?;
    let lhs = ext_var * Rational::from_u128(n as u128 + 1);
    let rhs = base_var * Rational::from_u128(n as u128);
    let holds = lhs <= rhs;
    Ok(ExactVarianceDrop { lhs, rhs, holds })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeaveOneOutCheck {
    /// `var(sum_i psi_i)`.
    pub sum_variance: Rational,
    /// `n sum_i var(psi_i)`.
    pub bound: Rational,
    pub holds: bool,
}

/// `var(sum_i psi_i) <= n sum_i var(psi_i)` where `psi_i` is `psi` applied to
/// the `n + 1` iid draws with the i-th removed.
pub fn verify_leave_one_out_bound(psi: &Estimator, dist: &FiniteDist) -> Result<LeaveOneOutCheck> {
    let n = psi.arity();
    let ext = psi.extend();
    let sum_variance = exact_var(&ext, dist, n + 1)? * Rational::from_u128((n as u128 + 1).pow(2));
    // each psi_i is psi on n iid draws
    let single = exact_var(psi, dist, n)?;
    let bound = single * Rational::from_u128(n as u128 * (n as u128 + 1));
    let holds = sum_variance <= bound;
    Ok(LeaveOneOutCheck {
        sum_variance,
        bound,
        holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{constant_kernel, make_median_kernel, make_variance_kernel, mean_kernel, product_kernel};
    use crate::scalar::rational;

    fn fair() -> FiniteDist {
        FiniteDist::two_point(rational(1, 2)).unwrap()
    }

    #[test]
    fn dist_validation() {
        assert!(FiniteDist::new(vec![(rational(0, 1), rational(1, 2))]).is_err());
        assert!(FiniteDist::new(vec![(rational(0, 1), rational(0, 1)), (rational(1, 1), rational(1, 1))]).is_err());
        assert!(FiniteDist::new(vec![]).is_err());
        assert_eq!(fair().variance(), rational(1, 4));
    }

    #[test]
    fn exact_mean_examples() {
        assert_eq!(exact_mean(&Estimator::mean(2), &fair(), 2).unwrap(), rational(1, 2));
        let med3 = make_median_kernel(3).unwrap();
        assert_eq!(exact_mean(&med3, &fair(), 3).unwrap(), rational(1, 2));
        assert_eq!(exact_mean(&Estimator::constant(2, 1.5), &fair(), 2).unwrap(), rational(3, 2));
        assert!(exact_mean(&med3, &fair(), 2).is_err());
    }

    #[test]
    fn exact_var_examples() {
        assert_eq!(exact_var(&Estimator::mean(4), &fair(), 4).unwrap(), rational(1, 16));
        let med3 = make_median_kernel(3).unwrap();
        assert_eq!(exact_var(&med3, &fair(), 3).unwrap(), rational(1, 4));
        assert_eq!(exact_var(&Estimator::constant(3, 2.0), &fair(), 3).unwrap(), rational(0, 1));
    }

    #[test]
    fn exact_vk_examples() {
        let p = product_kernel();
        assert_eq!(exact_vk(&p, &fair(), 1).unwrap(), rational(1, 16));
        assert_eq!(exact_vk(&p, &fair(), 2).unwrap(), rational(3, 16));
        assert_eq!(exact_vk(&constant_kernel(2, 3.0), &fair(), 1).unwrap(), rational(0, 1));
        assert!(exact_vk(&p, &fair(), 3).is_err());
    }

    #[test]
    fn hoeffding_formula_examples() {
        let c = verify_eq5(&product_kernel(), &fair(), 3).unwrap();
        assert!(c.equal);
        assert_eq!(c.formula_value, rational(5, 48));
        let d = FiniteDist::new(vec![
            (rational(0, 1), rational(1, 2)),
            (rational(1, 1), rational(1, 3)),
            (rational(5, 1), rational(1, 6)),
        ])
        .unwrap();
        let c = verify_eq5(&mean_kernel(), &d, 5).unwrap();
        assert!(c.equal);
        assert_eq!(c.formula_value, d.variance() / rational(5, 1));
        let uni = FiniteDist::uniform(vec![rational(0, 1), rational(1, 1), rational(2, 1)]).unwrap();
        let c = verify_eq5(&make_variance_kernel(), &uni, 4).unwrap();
        assert!(c.equal);
        // frozen from independent brute-force enumeration
        assert_eq!(c.enumerated_value, rational(7, 54));
    }

    #[test]
    fn variance_drop_examples() {
        let r = verify_variance_drop(&Estimator::median(3), &fair()).unwrap();
        assert!(r.holds);
        assert_eq!((r.lhs.clone(), r.rhs.clone()), (rational(5, 8), rational(3, 4)));
        let r = verify_variance_drop(&Estimator::mean(3), &fair()).unwrap();
        assert_eq!(r.lhs, r.rhs);
        let third = FiniteDist::two_point(rational(1, 3)).unwrap();
        let r = verify_variance_drop(&Estimator::median(4), &third).unwrap();
        assert!(r.holds);
        assert_eq!((r.lhs, r.rhs), (rational(322, 729), rational(344, 729)));
    }

    #[test]
    fn leave_one_out_bound_on_median() {
        let r = verify_leave_one_out_bound(&Estimator::median(3), &fair()).unwrap();
        assert!(r.holds);
    }

    #[test]
    fn hoeffding_variance_small_cases() {
        let v = [rational(1, 16), rational(3, 16)];
        assert_eq!(hoeffding_variance(3, &v).unwrap(), rational(5, 48));
        let v = [2.0f64, 7.0];
        assert!((hoeffding_variance(4, &v).unwrap() - (4.0 * 2.0 + 7.0) / 6.0).abs() < 1e-15);
        assert_eq!(hoeffding_variance(9, &[3.0f64]).unwrap(), 3.0 / 9.0);
        assert!(hoeffding_variance(1, &v).is_err());
    }

    #[test]
    fn state_guard() {
        let uni = FiniteDist::uniform((0..10).map(|i| rational(i, 1)).collect()).unwrap();
        assert!(matches!(
            exact_var(&Estimator::mean(8), &uni, 8),
            Err(Error::StateSpaceTooLarge { .. })
        ));
    }
}
