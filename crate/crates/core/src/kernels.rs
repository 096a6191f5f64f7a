//! Symmetric kernels of fixed arity and the scalar functions `h(x)` that
//! define arity-one kernels and efficiency bounds.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest arity accepted by [`symmetrize`] (m! evaluations per call).
pub const MAX_SYMMETRIZE_ARITY: usize = 8;

/// Labels resolvable by [`Kernel::from_label`].
pub const KERNEL_LABELS: &[&str] = &[
    "mean", "variance", "median3", "median5", "cube", "square", "product",
];

type ScalarClosure = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type TupleClosure = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A parameter-free scalar function `h(x)`.
#[derive(Clone)]
pub enum StatFn {
    Identity,
    Square,
    Cube,
    /// `1{x > threshold}`.
    Indicator { threshold: f64 },
    Custom {
        label: String,
        f: ScalarClosure,
        /// `|h(x)| = O(|x|^growth)`, when known.
        growth: Option<u32>,
        /// Points where `h` is not smooth.
        breaks: Vec<f64>,
    },
}

impl StatFn {
    pub fn custom(label: &str, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        StatFn::Custom {
            label: label.to_string(),
            f: Arc::new(f),
            growth: None,
            breaks: Vec::new(),
        }
    }

    /// The identity / square / cube / indicator battery used by bound checks.
    pub fn battery() -> Vec<StatFn> {
        vec![
            StatFn::Identity,
            StatFn::Square,
            StatFn::Cube,
            StatFn::Indicator { threshold: 0.5 },
        ]
    }

    pub fn from_label(label: &str) -> Option<Self> {
        match label {
            "identity" | "mean" => Some(StatFn::Identity),
            "square" => Some(StatFn::Square),
            "cube" => Some(StatFn::Cube),
            "indicator" => Some(StatFn::Indicator { threshold: 0.5 }),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            StatFn::Identity => "identity".into(),
            StatFn::Square => "square".into(),
            StatFn::Cube => "cube".into(),
            StatFn::Indicator { threshold } => format!("indicator>{threshold}"),
            StatFn::Custom { label, .. } => label.clone(),
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            StatFn::Identity => x,
            StatFn::Square => x * x,
            StatFn::Cube => x * x * x,
            StatFn::Indicator { threshold } => {
                if x > *threshold {
                    1.0
                } else {
                    0.0
                }
            }
            StatFn::Custom { f, .. } => f(x),
        }
    }

    pub fn eval_generic<T: Scalar>(&self, x: &T) -> T {
        match self {
            StatFn::Identity => x.clone(),
            StatFn::Square => x.clone() * x.clone(),
            StatFn::Cube => x.clone() * x.clone() * x.clone(),
            StatFn::Indicator { threshold } => {
                if *x > T::from_f64(*threshold) {
                    T::from_u128(1)
                } else {
                    T::zero()
                }
            }
            StatFn::Custom { f, .. } => T::from_f64(f(x.to_f64())),
        }
    }

    /// Polynomial growth order; `Some(0)` for bounded functions.
    pub fn growth(&self) -> Option<u32> {
        match self {
            StatFn::Identity => Some(1),
            StatFn::Square => Some(2),
            StatFn::Cube => Some(3),
            StatFn::Indicator { .. } => Some(0),
            StatFn::Custom { growth, .. } => *growth,
        }
    }

    pub fn breaks(&self) -> Vec<f64> {
        match self {
            StatFn::Indicator { threshold } => vec![*threshold],
            StatFn::Custom { breaks, .. } => breaks.clone(),
            _ => Vec::new(),
        }
    }
}

impl fmt::Debug for StatFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "StatFn({})", self.label())
    }
}

#[derive(Clone)]
enum KernelKind {
    H(StatFn),
    Variance,
    Median,
    Product,
    Constant(f64),
    Symmetrized(TupleClosure),
}

/// A symmetric function of `arity` real arguments.
///
/// Immutable after construction; evaluation is pure.
#[derive(Clone)]
pub struct Kernel {
    arity: usize,
    label: String,
    kind: KernelKind,
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Kernel({}, m={})", self.label, self.arity)
    }
}

impl Kernel {
    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn from_label(label: &str) -> Result<Kernel> {
        match label {
            "mean" => Ok(mean_kernel()),
            "variance" => Ok(make_variance_kernel()),
            "product" => Ok(product_kernel()),
            "cube" => Ok(make_h_kernel(StatFn::Cube, "cube")),
            "square" => Ok(make_h_kernel(StatFn::Square, "square")),
            _ => {
                if let Some(m) = label.strip_prefix("median").and_then(|s| s.parse::<usize>().ok()) {
                    if m > 0 && m % 2 == 1 {
                        return make_median_kernel(m);
                    }
                }
                Err(Error::UnknownKernel(label.to_string()))
            }
        }
    }

    /// Rank (1-based) of the order statistic this kernel returns, if it is one.
    pub fn order_statistic_rank(&self) -> Option<usize> {
        match self.kind {
            KernelKind::Median => Some(self.arity.div_ceil(2)),
            _ => None,
        }
    }

    /// Whether the kernel may fail to be smooth where two arguments coincide
    /// or at fixed thresholds.
    pub fn has_kinks(&self) -> bool {
        match &self.kind {
            KernelKind::Median | KernelKind::Symmetrized(_) => true,
            KernelKind::H(h) => !h.breaks().is_empty() || matches!(h, StatFn::Custom { .. }),
            _ => false,
        }
    }

    /// Thresholds where the kernel is not smooth in a single argument.
    pub fn breaks(&self) -> Vec<f64> {
        match &self.kind {
            KernelKind::H(h) => h.breaks(),
            _ => Vec::new(),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, KernelKind::Constant(_))
    }

    /// Evaluates on exactly `arity` arguments.
    #[inline]
    pub fn eval(&self, xs: &[f64]) -> f64 {
        debug_assert_eq!(xs.len(), self.arity);
        match &self.kind {
            KernelKind::H(h) => h.eval(xs[0]),
            KernelKind::Variance => {
                let d = xs[0] - xs[1];
                d * d / 2.0
            }
            KernelKind::Product => xs[0] * xs[1],
            KernelKind::Constant(c) => *c,
            KernelKind::Median => median_odd_f64(xs),
            KernelKind::Symmetrized(f) => symmetrized_eval(f.as_ref(), xs),
        }
    }

    /// Evaluates over any [`Scalar`]. Symmetrized closures run in `f64` and
    /// have their result lifted.
    pub fn eval_generic<T: Scalar>(&self, xs: &[T]) -> T {
        debug_assert_eq!(xs.len(), self.arity);
        match &self.kind {
            KernelKind::H(h) => h.eval_generic(&xs[0]),
            KernelKind::Variance => {
                let d = xs[0].clone() - xs[1].clone();
                d.clone() * d / T::from_u128(2)
            }
            KernelKind::Product => xs[0].clone() * xs[1].clone(),
            KernelKind::Constant(c) => T::from_f64(*c),
            KernelKind::Median => {
                let mut v = xs.to_vec();
                v.sort_by(T::total_cmp);
                v[v.len() / 2].clone()
            }
            KernelKind::Symmetrized(_) => {
                let floats: Vec<f64> = xs.iter().map(Scalar::to_f64).collect();
                T::from_f64(self.eval(&floats))
            }
        }
    }
}

fn median_odd_f64(xs: &[f64]) -> f64 {
    match xs.len() {
        1 => xs[0],
        3 => {
            let (a, b, c) = (xs[0], xs[1], xs[2]);
            a.max(b).min(a.min(b).max(c))
        }
        _ => {
            let mut buf = xs.to_vec();
            let mid = buf.len() / 2;
            *buf.select_nth_unstable_by(mid, f64::total_cmp).1
        }
    }
}

fn symmetrized_eval(f: &(dyn Fn(&[f64]) -> f64 + Send + Sync), xs: &[f64]) -> f64 {
    // Canonical argument order first, so the result is bitwise
    // permutation-invariant.
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut perm = sorted.clone();
    let mut acc = crate::exec::CompensatedSum::new();
    let mut count = 0u64;
    for_each_permutation(&mut perm, |p| {
        acc.add(f(p));
        count += 1;
    });
    acc.value() / count as f64
}

/// Heap's algorithm; visits every permutation of `items` once.
fn for_each_permutation(items: &mut [f64], mut visit: impl FnMut(&[f64])) {
    let n = items.len();
    let mut c = vec![0usize; n];
    visit(items);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                items.swap(0, i);
            } else {
                items.swap(c[i], i);
            }
            visit(items);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// Arity-one kernel evaluating `h`.
pub fn make_h_kernel(h: StatFn, label: &str) -> Kernel {
    Kernel {
        arity: 1,
        label: label.to_string(),
        kind: KernelKind::H(h),
    }
}

pub fn mean_kernel() -> Kernel {
    make_h_kernel(StatFn::Identity, "mean")
}

/// `(x1 - x2)^2 / 2`; its U-statistic is the unbiased sample variance.
pub fn make_variance_kernel() -> Kernel {
    Kernel {
        arity: 2,
        label: "variance".into(),
        kind: KernelKind::Variance,
    }
}

pub fn product_kernel() -> Kernel {
    Kernel {
        arity: 2,
        label: "product".into(),
        kind: KernelKind::Product,
    }
}

pub fn constant_kernel(arity: usize, value: f64) -> Kernel {
    Kernel {
        arity,
        label: format!("constant{arity}"),
        kind: KernelKind::Constant(value),
    }
}

/// Middle order statistic of `m` arguments; `m` must be odd.
pub fn make_median_kernel(m: usize) -> Result<Kernel> {
    if m.is_multiple_of(2) {
        return Err(Error::EvenMedianArity(m));
    }
    Ok(Kernel {
        arity: m,
        label: format!("median{m}"),
        kind: KernelKind::Median,
    })
}

/// Averages `f` over all `m!` orderings of its arguments.
pub fn symmetrize(
    m: usize,
    label: &str,
    f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
) -> Result<Kernel> {
    if m == 0 {
        return Err(Error::InvalidArgument("kernel arity must be positive".into()));
    }
    if m > MAX_SYMMETRIZE_ARITY {
        return Err(Error::ArityTooLarge {
            arity: m,
            limit: MAX_SYMMETRIZE_ARITY,
        });
    }
    Ok(Kernel {
        arity: m,
        label: label.to_string(),
        kind: KernelKind::Symmetrized(Arc::new(f)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{rational, Rational};
    use proptest::prelude::*;

    #[test]
    fn h_kernels() {
        assert_eq!(mean_kernel().eval(&[5.0]), 5.0);
        assert_eq!(make_h_kernel(StatFn::Square, "sq").eval(&[3.0]), 9.0);
        assert_eq!(Kernel::from_label("cube").unwrap().eval(&[-2.0]), -8.0);
    }

    #[test]
    fn variance_kernel_values() {
        let k = make_variance_kernel();
        assert_eq!(k.eval(&[0.0, 2.0]), 2.0);
        assert_eq!(k.eval(&[1.7, 1.7]), 0.0);
        let pairs = [(0.0, 1.0), (0.0, 2.0), (1.0, 2.0)];
        let avg: f64 = pairs.iter().map(|&(a, b)| k.eval(&[a, b])).sum::<f64>() / 3.0;
        // unbiased sample variance of (0, 1, 2)
        let xs = [0.0, 1.0, 2.0];
        let mean = 1.0;
        let s2 = xs.iter().map(|x: &f64| (x - mean).powi(2)).sum::<f64>() / 2.0;
        assert_eq!(avg, s2);
        assert_eq!(avg, 1.0);
    }

    #[test]
    fn median_kernels() {
        assert_eq!(make_median_kernel(3).unwrap().eval(&[1.0, 10.0, 2.0]), 2.0);
        assert_eq!(make_median_kernel(1).unwrap().eval(&[7.0]), 7.0);
        assert_eq!(make_median_kernel(5).unwrap().eval(&[5.0, 1.0, 4.0, 2.0, 3.0]), 3.0);
        assert!(matches!(make_median_kernel(4), Err(Error::EvenMedianArity(4))));
    }

    #[test]
    fn registry_resolves_documented_labels() {
        for label in KERNEL_LABELS {
            assert_eq!(Kernel::from_label(label).unwrap().label(), *label);
        }
        assert_eq!(Kernel::from_label("median3").unwrap().arity(), 3);
        assert!(Kernel::from_label("median4").is_err());
        assert!(Kernel::from_label("nope").is_err());
    }

    #[test]
    fn symmetrize_examples() {
        let first = symmetrize(2, "first", |x| x[0]).unwrap();
        assert_eq!(first.eval(&[3.0, 5.0]), 4.0);
        let xy2 = symmetrize(2, "xy2", |x| x[0] * x[1] * x[1]).unwrap();
        assert_eq!(xy2.eval(&[1.0, 2.0]), 3.0);
        let sum = symmetrize(3, "sum", |x| x.iter().sum()).unwrap();
        assert_eq!(sum.eval(&[1.0, 2.0, 4.0]), 7.0);
        assert!(matches!(
            symmetrize(9, "big", |x| x[0]),
            Err(Error::ArityTooLarge { arity: 9, .. })
        ));
    }

    #[test]
    fn exact_evaluation_matches_float_on_dyadics() {
        let k = make_median_kernel(3).unwrap();
        let xs = [rational(1, 2), rational(3, 1), rational(-1, 4)];
        assert_eq!(k.eval_generic::<Rational>(&xs), rational(1, 2));
        let v = make_variance_kernel();
        assert_eq!(v.eval_generic::<Rational>(&[rational(0, 1), rational(1, 3)]), rational(1, 18));
    }

    fn builtins() -> Vec<Kernel> {
        vec![
            mean_kernel(),
            make_variance_kernel(),
            product_kernel(),
            make_median_kernel(3).unwrap(),
            make_median_kernel(5).unwrap(),
            make_h_kernel(StatFn::Cube, "cube"),
            constant_kernel(3, 2.5),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn builtin_kernels_are_permutation_invariant(
            xs in proptest::collection::vec(-1e3f64..1e3, 5),
            perm_seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut rng = crate::seeding::SimRng::seed_from_u64(perm_seed);
            for k in builtins() {
                let args = &xs[..k.arity()];
                let mut shuffled = args.to_vec();
                shuffled.shuffle(&mut rng);
                let a = k.eval(args);
                let b = k.eval(&shuffled);
                if k.order_statistic_rank().is_some() {
                    prop_assert_eq!(a, b);
                } else {
                    prop_assert!((a - b).abs() <= 1e-15 * a.abs().max(b.abs()));
                }
            }
        }

        #[test]
        fn symmetrized_kernels_are_exactly_invariant(
            xs in proptest::collection::vec(-10f64..10.0, 4),
            perm_seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let k = symmetrize(4, "skew", |x| x[0] * x[1].exp() - x[2] / (1.0 + x[3] * x[3])).unwrap();
            let mut rng = crate::seeding::SimRng::seed_from_u64(perm_seed);
            let mut shuffled = xs.clone();
            shuffled.shuffle(&mut rng);
            prop_assert_eq!(k.eval(&xs).to_bits(), k.eval(&shuffled).to_bits());
        }

        #[test]
        fn symmetrize_is_a_fixed_point_on_symmetric_input(
            xs in proptest::collection::vec(-10f64..10.0, 3),
        ) {
            let k = symmetrize(3, "prod", |x| x[0] * x[1] * x[2]).unwrap();
            let direct = xs[0] * xs[1] * xs[2];
            prop_assert!((k.eval(&xs) - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
        }
    }
}
