//! U-statistics: exact, incremental and subsampled evaluation, plus the
//! jackknife extension operator and extension chains.

use std::fmt;
use std::sync::Arc;

use rand::seq::index;

use crate::combin::{binomial, for_each_subset, next_subset, unrank};
use crate::error::{Error, Result};
use crate::exec::{chunk_count, map_indexed, CompensatedSum, Parallelism, CHUNK};
use crate::kernels::Kernel;
use crate::lstat::LWeights;
use crate::scalar::Scalar;
use crate::seeding::rng_for;

/// Largest subset count `u_statistic` will enumerate.
pub const MAX_EXACT_SUBSETS: u64 = 100_000_000;

/// Largest sample the memoized literal chain accepts (2^n table).
pub const MAX_MEMOIZED_CHAIN: usize = 22;

/// Largest sample the unmemoized literal chain accepts (n!/m! evaluations).
pub const MAX_LITERAL_CHAIN: usize = 10;

/// An immutable, non-empty list of observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    values: Arc<[f64]>,
}

impl Sample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("a sample needs at least one observation".into()));
        }
        if values.iter().any(|x| x.is_nan()) {
            return Err(Error::InvalidArgument("sample contains NaN".into()));
        }
        Ok(Sample {
            values: values.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl TryFrom<Vec<f64>> for Sample {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Sample::new(v)
    }
}

impl TryFrom<&[f64]> for Sample {
    type Error = Error;

    fn try_from(v: &[f64]) -> Result<Self> {
        Sample::new(v.to_vec())
    }
}

type Closure = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
enum EstimatorKind {
    Kernel(Kernel),
    Mean,
    Median,
    LStat(Arc<LWeights>),
    UStat(Kernel),
    Extension(Box<Estimator>),
    Constant(f64),
    Custom(Closure),
}

/// A statistic of a fixed number of observations.
#[derive(Clone)]
pub struct Estimator {
    arity: usize,
    symmetric: bool,
    kind: EstimatorKind,
}

impl fmt::Debug for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Estimator({}, n={})", self.label(), self.arity)
    }
}

impl Estimator {
    pub fn mean(n: usize) -> Self {
        Self::builtin(n, EstimatorKind::Mean)
    }

    /// Sample median; the average of the two middle values for even `n`.
    pub fn median(n: usize) -> Self {
        Self::builtin(n, EstimatorKind::Median)
    }

    pub fn from_kernel(kernel: Kernel) -> Self {
        let n = kernel.arity();
        Self::builtin(n, EstimatorKind::Kernel(kernel))
    }

    /// The U-statistic with `kernel` on `n` observations.
    pub fn u_statistic(kernel: Kernel, n: usize) -> Result<Self> {
        if n < kernel.arity() {
            return Err(Error::SampleTooShort {
                len: n,
                arity: kernel.arity(),
            });
        }
        Ok(Self::builtin(n, EstimatorKind::UStat(kernel)))
    }

    pub fn lstat(weights: LWeights) -> Self {
        let n = weights.n();
        Self::builtin(n, EstimatorKind::LStat(Arc::new(weights)))
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self::builtin(n, EstimatorKind::Constant(value))
    }

    /// Wraps an arbitrary function; `symmetric` is the caller's claim.
    pub fn custom(
        n: usize,
        symmetric: bool,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Estimator {
            arity: n,
            symmetric,
            kind: EstimatorKind::Custom(Arc::new(f)),
        }
    }

    fn builtin(n: usize, kind: EstimatorKind) -> Self {
        Estimator {
            arity: n,
            symmetric: true,
            kind,
        }
    }

    /// The jackknife extension of this estimator, of arity `n + 1`.
    pub fn extend(&self) -> Estimator {
        Estimator {
            arity: self.arity + 1,
            symmetric: self.symmetric,
            kind: EstimatorKind::Extension(Box::new(self.clone())),
        }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn label(&self) -> String {
        match &self.kind {
            EstimatorKind::Kernel(k) => k.label().to_string(),
            EstimatorKind::Mean => "mean".into(),
            EstimatorKind::Median => "median".into(),
            EstimatorKind::LStat(_) => "lstat".into(),
            EstimatorKind::UStat(k) => format!("ustat[{}]", k.label()),
            EstimatorKind::Extension(base) => format!("ext[{}]", base.label()),
            EstimatorKind::Constant(c) => format!("constant({c})"),
            EstimatorKind::Custom(_) => "custom".into(),
        }
    }

    #[inline]
    pub fn eval(&self, xs: &[f64]) -> f64 {
        match &self.kind {
            EstimatorKind::Custom(f) => f(xs),
            _ => self.eval_generic::<f64>(xs),
        }
    }

    /// Evaluates over any [`Scalar`]; custom closures run in `f64`.
    pub fn eval_generic<T: Scalar>(&self, xs: &[T]) -> T {
        debug_assert_eq!(xs.len(), self.arity);
        match &self.kind {
            EstimatorKind::Kernel(k) => k.eval_generic(xs),
            EstimatorKind::Mean => T::sum_of(xs.iter().cloned()) / T::from_u128(xs.len() as u128),
            EstimatorKind::Median => {
                let mut v = xs.to_vec();
                v.sort_by(T::total_cmp);
                let n = v.len();
                if n % 2 == 1 {
                    v[n / 2].clone()
                } else {
                    (v[n / 2 - 1].clone() + v[n / 2].clone()) / T::from_u128(2)
                }
            }
            EstimatorKind::LStat(w) => w.eval_generic(xs),
            EstimatorKind::UStat(k) => exact_ustat_generic(k, xs),
            EstimatorKind::Extension(base) => {
                let n = xs.len();
                let mut buf = Vec::with_capacity(n - 1);
                let terms = (0..n).map(|skip| {
                    buf.clear();
                    buf.extend(xs.iter().enumerate().filter(|&(i, _)| i != skip).map(|(_, x)| x.clone()));
                    base.eval_generic(&buf)
                });
                let total = T::sum_of(terms.collect::<Vec<_>>());
                total / T::from_u128(n as u128)
            }
            EstimatorKind::Constant(c) => T::from_f64(*c),
            EstimatorKind::Custom(f) => {
                let floats: Vec<f64> = xs.iter().map(Scalar::to_f64).collect();
                T::from_f64(f(&floats))
            }
        }
    }
}

fn exact_ustat_generic<T: Scalar>(kernel: &Kernel, xs: &[T]) -> T {
    let m = kernel.arity();
    let mut terms = Vec::new();
    let mut args = Vec::with_capacity(m);
    for_each_subset(xs.len(), m, |idx| {
        args.clear();
        args.extend(idx.iter().map(|&i| xs[i].clone()));
        terms.push(kernel.eval_generic(&args));
    });
    let count = terms.len() as u128;
    T::sum_of(terms) / T::from_u128(count)
}

fn subset_count(n: usize, m: usize) -> Result<u64> {
    if n < m {
        return Err(Error::SampleTooShort { len: n, arity: m });
    }
    match binomial(n as u64, m as u64) {
        Some(c) if c <= u128::from(MAX_EXACT_SUBSETS) => Ok(c as u64),
        Some(c) => Err(Error::TooManySubsets {
            count: c,
            limit: MAX_EXACT_SUBSETS,
        }),
        None => Err(Error::TooManySubsets {
            count: u128::MAX,
            limit: MAX_EXACT_SUBSETS,
        }),
    }
}

/// Mean of `kernel` over all `C(n, m)` subsets of `sample`.
pub fn u_statistic(kernel: &Kernel, sample: &Sample) -> Result<f64> {
    u_statistic_with(kernel, sample, Parallelism::default())
}

/// [`u_statistic`] with explicit parallelism. Subsets are enumerated
/// lexicographically in fixed-size chunks and chunk sums merged in order, so
/// the result does not depend on `par`.
pub fn u_statistic_with(kernel: &Kernel, sample: &Sample, par: Parallelism) -> Result<f64> {
    let n = sample.len();
    let m = kernel.arity();
    let total = subset_count(n, m)?;
    let xs = sample.values();
    let chunks = chunk_count(total as usize, CHUNK);
    let partials = map_indexed(chunks, par, |c| {
        let start = (c * CHUNK) as u128;
        let len = CHUNK.min(total as usize - c * CHUNK);
        let mut idx = unrank(n, m, start);
        let mut args = vec![0.0; m];
        let mut acc = CompensatedSum::new();
        for step in 0..len {
            for (a, &i) in args.iter_mut().zip(&idx) {
                *a = xs[i];
            }
            acc.add(kernel.eval(&args));
            if step + 1 < len {
                next_subset(&mut idx, n);
            }
        }
        acc
    });
    let mut acc = CompensatedSum::new();
    for p in &partials {
        acc.merge(p);
    }
    Ok(acc.value() / total as f64)
}

/// Average of `estimator` (arity n) over the `n + 1` leave-one-out
/// subsamples of `sample`; subsample order follows the sample.
pub fn jackknife_extend(estimator: &Estimator, sample: &Sample) -> Result<f64> {
    let expected = estimator.arity() + 1;
    if sample.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            got: sample.len(),
        });
    }
    Ok(estimator.extend().eval(sample.values()))
}

/// How [`extend_chain_with`] evaluates the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainMode {
    /// Evaluate as the U-statistic with the starting kernel.
    Identity,
    /// Materialize the nested extension estimator and evaluate it directly.
    Literal,
    /// The literal chain, memoized over index subsets.
    Memoized,
}

/// Starts from `kernel` on m points and applies the jackknife extension until
/// all `n` points are included.
pub fn extend_chain(kernel: &Kernel, sample: &Sample) -> Result<f64> {
    let mode = if sample.len() >= kernel.arity() + 2 {
        ChainMode::Identity
    } else {
        ChainMode::Literal
    };
    extend_chain_with(kernel, sample, mode)
}

pub fn extend_chain_with(kernel: &Kernel, sample: &Sample, mode: ChainMode) -> Result<f64> {
    let n = sample.len();
    let m = kernel.arity();
    if n < m {
        return Err(Error::SampleTooShort { len: n, arity: m });
    }
    match mode {
        ChainMode::Identity => u_statistic(kernel, sample),
        ChainMode::Literal => {
            if n > MAX_LITERAL_CHAIN {
                return Err(Error::InvalidArgument(format!(
                    "literal chain limited to n <= {MAX_LITERAL_CHAIN}"
                )));
            }
            let mut est = Estimator::from_kernel(kernel.clone());
            while est.arity() < n {
                est = est.extend();
            }
            Ok(est.eval(sample.values()))
        }
        ChainMode::Memoized => memoized_chain(kernel, sample.values()),
    }
}

fn memoized_chain(kernel: &Kernel, xs: &[f64]) -> Result<f64> {
    let n = xs.len();
    let m = kernel.arity();
    if n > MAX_MEMOIZED_CHAIN {
        return Err(Error::InvalidArgument(format!(
            "memoized chain limited to n <= {MAX_MEMOIZED_CHAIN}"
        )));
    }
    // value[mask] = chained estimator of size popcount(mask) on those points
    let mut value = vec![0.0f64; 1usize << n];
    let mut args = Vec::with_capacity(m);
    for_each_subset(n, m, |idx| {
        args.clear();
        args.extend(idx.iter().map(|&i| xs[i]));
        let mask = idx.iter().fold(0usize, |acc, &i| acc | (1 << i));
        value[mask] = kernel.eval(&args);
    });
    for size in m + 1..=n {
        for_each_subset(n, size, |idx| {
            let mask = idx.iter().fold(0usize, |acc, &i| acc | (1 << i));
            let sum: CompensatedSum = idx.iter().map(|&i| value[mask & !(1 << i)]).collect();
            value[mask] = sum.value() / size as f64;
        });
    }
    Ok(value[(1usize << n) - 1])
}

/// Unbiased estimate of the U-statistic from `draws` subsets sampled
/// uniformly with replacement. Deterministic in `seed`.
pub fn incomplete_u_statistic(kernel: &Kernel, sample: &Sample, draws: usize, seed: u64) -> Result<f64> {
    incomplete_u_statistic_with(kernel, sample, draws, seed, Parallelism::default())
}

pub fn incomplete_u_statistic_with(
    kernel: &Kernel,
    sample: &Sample,
    draws: usize,
    seed: u64,
    par: Parallelism,
) -> Result<f64> {
    let n = sample.len();
    let m = kernel.arity();
    if n < m {
        return Err(Error::SampleTooShort { len: n, arity: m });
    }
    if draws == 0 {
        return Err(Error::InvalidArgument("draws must be at least 1".into()));
    }
    let xs = sample.values();
    const BLOCK: usize = 1024;
    let partials = map_indexed(chunk_count(draws, BLOCK), par, |b| {
        let mut rng = rng_for(seed, &[b as u64]);
        let len = BLOCK.min(draws - b * BLOCK);
        let mut args = vec![0.0; m];
        let mut acc = CompensatedSum::new();
        for _ in 0..len {
            let mut picked = index::sample(&mut rng, n, m).into_vec();
            picked.sort_unstable();
            for (a, &i) in args.iter_mut().zip(&picked) {
                *a = xs[i];
            }
            acc.add(kernel.eval(&args));
        }
        acc
    });
    let mut acc = CompensatedSum::new();
    for p in &partials {
        acc.merge(p);
    }
    Ok(acc.value() / draws as f64)
}

/// Running U-statistic over a growing sample.
///
/// Absorbing the `(n+1)`-th observation evaluates the kernel on every
/// `(m-1)`-subset of the first `n` joined with it: `C(n, m-1)` evaluations.
#[derive(Debug, Clone)]
pub struct UStatAccumulator {
    kernel: Kernel,
    observations: Vec<f64>,
    sum: CompensatedSum,
    evaluations: u64,
}

impl UStatAccumulator {
    pub fn new(kernel: Kernel) -> Self {
        UStatAccumulator {
            kernel,
            observations: Vec::new(),
            sum: CompensatedSum::new(),
            evaluations: 0,
        }
    }

    pub fn push(&mut self, x: f64) {
        let m = self.kernel.arity();
        let n = self.observations.len();
        let mut args = vec![0.0; m];
        args[m - 1] = x;
        let obs = &self.observations;
        let kernel = &self.kernel;
        let sum = &mut self.sum;
        let mut evals = 0u64;
        for_each_subset(n, m - 1, |idx| {
            for (a, &i) in args.iter_mut().zip(idx) {
                *a = obs[i];
            }
            sum.add(kernel.eval(&args));
            evals += 1;
        });
        self.evaluations += evals;
        self.observations.push(x);
    }

    /// Builder-style [`push`](Self::push).
    pub fn with(mut self, x: f64) -> Self {
        self.push(x);
        self
    }

    pub fn count(&self) -> usize {
        self.observations.len()
    }

    /// Kernel evaluations performed so far.
    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    pub fn value(&self) -> Result<f64> {
        let n = self.observations.len();
        let m = self.kernel.arity();
        if n < m {
            return Err(Error::NotReady { have: n, need: m });
        }
        let c = crate::combin::binomial_f64(n as u64, m as u64);
        Ok(self.sum.value() / c)
    }
}
