//! Conditional projections `g_k`, their variances `v_k`, the finite-sample
//! variance of a U-statistic, variance-drop checks and CLT diagnostics.

use crate::error::{Error, Result};
use crate::exact::{self, ExactVarianceDrop, FiniteDist};
use crate::exec::{map_indexed, CompensatedSum, Parallelism};
use crate::families::Family;
use crate::kernels::Kernel;
use crate::quadrature::integrate;
use crate::quadrature::Tolerance;
use num_traits::Zero;

use crate::scalar::{rational_to_f64, Rational, Scalar};
use crate::seeding::{rng_for, SimRng};
use crate::ustat::{u_statistic_with, Estimator, Sample};

/// Nested quadrature is limited to this many free arguments.
pub const MAX_NESTED_DEPTH: usize = 3;

/// Batches used for Monte Carlo standard errors.
pub const MC_BATCHES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarlo {
    pub outer: usize,
    pub inner: usize,
    pub seed: u64,
    pub parallelism: Parallelism,
}

impl MonteCarlo {
    pub fn new(outer: usize, inner: usize, seed: u64) -> Self {
        MonteCarlo {
            outer,
            inner,
            seed,
            parallelism: Parallelism::default(),
        }
    }

    pub fn with_parallelism(mut self, parallelism: Parallelism) -> Self {
        self.parallelism = parallelism;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Rational enumeration; finite-support families only.
    Exact,
    /// Quadrature or lattice summation.
    Numeric,
    MonteCarlo(MonteCarlo),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub value: f64,
    /// Quadrature error estimate or Monte Carlo standard error.
    pub error: f64,
}

fn exact_dist(family: &Family, theta: f64) -> Result<FiniteDist> {
    family.finite_dist(theta).unwrap_or_else(|| {
        Err(Error::Unsupported(format!(
            "exact evaluation needs a finite support; {} has none",
            family.name()
        )))
    })
}

/// `g_k(fixed) = E[kernel(fixed, X_{k+1}, ..., X_m)]` with `k = fixed.len()`.
pub fn conditional_projection(
    family: &Family,
    kernel: &Kernel,
    theta: f64,
    fixed: &[f64],
    method: &Method,
) -> Result<Projection> {
    family.check_theta(theta)?;
    let m = kernel.arity();
    if fixed.len() > m {
        return Err(Error::LengthMismatch {
            expected: m,
            got: fixed.len(),
        });
    }
    if fixed.len() == m || kernel.is_constant() {
        let mut args = fixed.to_vec();
        args.resize(m, 0.0);
        return Ok(Projection {
            value: kernel.eval(&args),
            error: 0.0,
        });
    }
    match method {
        Method::Exact => {
            let dist = exact_dist(family, theta)?;
            let lifted: Vec<Rational> = fixed.iter().map(|&x| Rational::from_f64(x)).collect();
            let g = exact::exact_projection(kernel, &dist, &lifted)?;
            Ok(Projection {
                value: rational_to_f64(&g),
                error: 0.0,
            })
        }
        Method::Numeric => numeric_projection(family, kernel, theta, fixed),
        Method::MonteCarlo(mc) => {
            let free = m - fixed.len();
            let draws = mc.outer.max(2);
            let values = map_indexed(draws, mc.parallelism, |i| {
                let mut rng = rng_for(mc.seed, &[fixed.len() as u64, i as u64]);
                let mut args = fixed.to_vec();
                args.resize(m, 0.0);
                family.sample_into(theta, &mut rng, &mut args[m - free..]);
                kernel.eval(&args)
            });
            let (mean, var) = mean_var(&values);
            Ok(Projection {
                value: mean,
                error: (var / draws as f64).sqrt(),
            })
        }
    }
}

fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().copied().collect::<CompensatedSum>().value() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).collect::<CompensatedSum>().value();
    (mean, ss / (n - 1.0))
}

fn is_continuous_with_cdf(family: &Family) -> bool {
    family.support().is_continuous() && family.cdf(0.0, 0.0).is_some()
}

fn numeric_projection(family: &Family, kernel: &Kernel, theta: f64, fixed: &[f64]) -> Result<Projection> {
    let m = kernel.arity();
    if let Some(rank) = kernel.order_statistic_rank() {
        if m > 1 && is_continuous_with_cdf(family) {
            return order_statistic_mean(family, theta, fixed, m - fixed.len(), rank);
        }
    }
    let free = m - fixed.len();
    if free > MAX_NESTED_DEPTH {
        return Err(Error::Unsupported(format!(
            "numeric projection over {free} free arguments (limit {MAX_NESTED_DEPTH})"
        )));
    }
    let value = nested_expectation(family, kernel, theta, fixed, free)?;
    Ok(Projection { value, error: 0.0 })
}

fn nested_expectation(family: &Family, kernel: &Kernel, theta: f64, args: &[f64], free: usize) -> Result<f64> {
    if free == 0 {
        return Ok(kernel.eval(args));
    }
    let mut breaks = kernel.breaks();
    if kernel.has_kinks() {
        breaks.extend_from_slice(args);
    }
    let snapshot = args.to_vec();
    let r = family.expect(
        theta,
        |x| {
            let mut a = snapshot.clone();
            a.push(x);
            nested_expectation(family, kernel, theta, &a, free - 1)
        },
        &breaks,
    )?;
    Ok(r.value)
}

/// Mean of the `rank`-th smallest of `fixed` together with `free` iid draws:
/// `E Y = int_0^inf P(Y > t) dt - int_-inf^0 P(Y <= t) dt`.
fn order_statistic_mean(family: &Family, theta: f64, fixed: &[f64], free: usize, rank: usize) -> Result<Projection> {
    // P(Y > t) = P(#{fixed <= t} + Bin(free, F(t)) < rank).
    let upper_tail = |t: f64, want_upper: bool| -> f64 {
        let below = fixed.iter().filter(|&&x| x <= t).count();
        let need = rank as i64 - below as i64;
        if need <= 0 {
            return if want_upper { 0.0 } else { 1.0 };
        }
        if need as usize > free {
            return if want_upper { 1.0 } else { 0.0 };
        }
        let f = family.cdf(t, theta).unwrap_or(f64::NAN);
        let s = family.sf(t, theta).unwrap_or(1.0 - f);
        // Sum the shorter side of the binomial for accuracy.
        let need = need as usize;
        let pmf = |i: usize| binom_pmf(free, i, f, s);
        if want_upper {
            (0..need).map(pmf).sum()
        } else {
            (need..=free).map(pmf).sum()
        }
    };
    let mut breaks = family.breaks(theta);
    breaks.extend_from_slice(fixed);
    // Decade breaks keep each piece within a modest dynamic range when a
    // fixed argument sits far out in a heavy tail.
    for &x in fixed {
        let mut d = 10.0;
        while d < x.abs() {
            breaks.push(d.copysign(x));
            d *= 10.0;
        }
    }
    let tol = Tolerance::default();
    let pos_breaks: Vec<f64> = breaks.iter().copied().filter(|&b| b > 0.0).collect();
    let neg_breaks: Vec<f64> = breaks.iter().copied().filter(|&b| b < 0.0).collect();
    let pos = integrate(|t| Ok(upper_tail(t, true)), 0.0, f64::INFINITY, &pos_breaks, tol)?;
    let neg = integrate(|t| Ok(upper_tail(t, false)), f64::NEG_INFINITY, 0.0, &neg_breaks, tol)?;
    Ok(Projection {
        value: pos.value - neg.value,
        error: pos.error + neg.error,
    })
}

fn binom_pmf(n: usize, i: usize, p: f64, q: f64) -> f64 {
    crate::combin::binomial_f64(n as u64, i as u64) * p.powi(i as i32) * q.powi((n - i) as i32)
}

/// `v_k = var g_k(X_1..X_k)` for `k = 0..=m`.
#[derive(Debug, Clone, PartialEq)]
pub struct HoeffdingComponents {
    pub m: usize,
    pub theta: f64,
    /// `v[k]`; `v[0] = 0`.
    pub v: Vec<f64>,
    /// Monte Carlo standard errors, aligned with `v`.
    pub std_err: Option<Vec<f64>>,
    /// Exact values under [`Method::Exact`].
    pub exact: Option<Vec<Rational>>,
    pub gamma: f64,
    /// `v_1 <= v_2 <= ... <= v_m` within tolerance (three standard errors
    /// under Monte Carlo, `1e-9` relative otherwise).
    pub monotone: bool,
}

/// `v_k` for a single `k`, with a standard error under Monte Carlo.
pub fn projection_variance(
    family: &Family,
    kernel: &Kernel,
    theta: f64,
    k: usize,
    method: &Method,
) -> Result<(f64, Option<f64>)> {
    family.check_theta(theta)?;
    let m = kernel.arity();
    if k > m {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds arity {m}")));
    }
    if k == 0 || kernel.is_constant() {
        return Ok((0.0, None));
    }
    match method {
        Method::Exact => {
            let dist = exact_dist(family, theta)?;
            Ok((rational_to_f64(&exact::exact_vk(kernel, &dist, k)?), None))
        }
        Method::Numeric => {
            let gamma = numeric_projection(family, kernel, theta, &[])?.value;
            let v = outer_expectation(family, kernel, theta, &[], k, gamma)?;
            Ok((v, None))
        }
        Method::MonteCarlo(mc) => {
            let (v, se) = mc_projection_variance(family, kernel, theta, k, mc)?;
            Ok((v, Some(se)))
        }
    }
}

fn outer_expectation(
    family: &Family,
    kernel: &Kernel,
    theta: f64,
    args: &[f64],
    remaining: usize,
    gamma: f64,
) -> Result<f64> {
    if remaining == 0 {
        let g = numeric_projection(family, kernel, theta, args)?.value;
        return Ok((g - gamma) * (g - gamma));
    }
    let breaks = if kernel.has_kinks() { args.to_vec() } else { Vec::new() };
    let snapshot = args.to_vec();
    let r = family.expect(
        theta,
        |x| {
            let mut a = snapshot.clone();
            a.push(x);
            outer_expectation(family, kernel, theta, &a, remaining - 1, gamma)
        },
        &breaks,
    )?;
    Ok(r.value)
}

/// Nested estimator: the sample variance of inner means, less the average
/// inner variance over the inner count (removes the inner-noise bias).
fn mc_projection_variance(family: &Family, kernel: &Kernel, theta: f64, k: usize, mc: &MonteCarlo) -> Result<(f64, f64)> {
    if mc.outer < 2 * MC_BATCHES {
        return Err(Error::InvalidArgument(format!(
            "Monte Carlo needs at least {} outer draws",
            2 * MC_BATCHES
        )));
    }
    let m = kernel.arity();
    let inner = if k == m { 1 } else { mc.inner.max(2) };
    let pairs = map_indexed(mc.outer, mc.parallelism, |i| {
        let mut rng = rng_for(mc.seed, &[k as u64, i as u64]);
        let mut args = vec![0.0; m];
        family.sample_into(theta, &mut rng, &mut args[..k]);
        if k == m {
            return (kernel.eval(&args), 0.0);
        }
        let vals: Vec<f64> = (0..inner)
            .map(|_| {
                family.sample_into(theta, &mut rng, &mut args[k..]);
                kernel.eval(&args)
            })
            .collect();
        mean_var(&vals)
    });
    let estimate = |chunk: &[(f64, f64)]| -> f64 {
        let gs: Vec<f64> = chunk.iter().map(|p| p.0).collect();
        let (_, var_g) = mean_var(&gs);
        let noise = chunk.iter().map(|p| p.1).collect::<CompensatedSum>().value() / chunk.len() as f64;
        var_g - noise / inner as f64
    };
    let v = estimate(&pairs);
    let size = mc.outer / MC_BATCHES;
    let batch: Vec<f64> = (0..MC_BATCHES).map(|b| estimate(&pairs[b * size..(b + 1) * size])).collect();
    let (_, var_b) = mean_var(&batch);
    Ok((v, (var_b / MC_BATCHES as f64).sqrt()))
}

/// All `v_k` for `k = 0..=m`.
pub fn v_components(family: &Family, kernel: &Kernel, theta: f64, method: &Method) -> Result<HoeffdingComponents> {
    family.check_theta(theta)?;
    let m = kernel.arity();
    let (v, std_err, exact, gamma) = match method {
        Method::Exact => {
            let dist = exact_dist(family, theta)?;
            let mut ex = vec![Rational::zero()];
            for k in 1..=m {
                ex.push(exact::exact_vk(kernel, &dist, k)?);
            }
            let gamma = rational_to_f64(&exact::exact_projection(kernel, &dist, &[])?);
            (ex.iter().map(rational_to_f64).collect(), None, Some(ex), gamma)
        }
        Method::Numeric => {
            let v = (0..=m)
                .map(|k| projection_variance(family, kernel, theta, k, method).map(|p| p.0))
                .collect::<Result<Vec<_>>>()?;
            let gamma = numeric_projection(family, kernel, theta, &[])?.value;
            (v, None, None, gamma)
        }
        Method::MonteCarlo(mc) => {
            let mut v = vec![0.0];
            let mut se = vec![0.0];
            for k in 1..=m {
                let (vk, sk) = mc_projection_variance(family, kernel, theta, k, mc)?;
                v.push(vk);
                se.push(sk);
            }
            let gamma = conditional_projection(family, kernel, theta, &[], method)?.value;
            (v, Some(se), None, gamma)
        }
    };
    let monotone = (1..m).all(|k| {
        let slack = match &std_err {
            Some(se) => 3.0 * (se[k] * se[k] + se[k + 1] * se[k + 1]).sqrt(),
            None => 1e-9 * v[k + 1].abs().max(1e-12),
        };
        v[k] <= v[k + 1] + slack
    });
    Ok(HoeffdingComponents {
        m,
        theta,
        v,
        std_err,
        exact,
        gamma,
        monotone,
    })
}

/// Finite-sample variance of the U-statistic on `n` draws.
pub fn ustat_variance_formula(n: usize, comps: &HoeffdingComponents) -> Result<f64> {
    exact::hoeffding_variance(n, &comps.v[1..])
}

/// `m^2 v_1 / n`.
pub fn asymptotic_variance(comps: &HoeffdingComponents, n: usize) -> f64 {
    let m = comps.m as f64;
    m * m * comps.v[1] / n as f64
}

/// `(n+1) var(extension)` against `n var(estimator)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceDropReport {
    pub n: usize,
    pub lhs: f64,
    pub rhs: f64,
    /// Three standard errors of `rhs - lhs` under Monte Carlo, else zero.
    pub tolerance: f64,
    /// `rhs - lhs + tolerance`.
    pub margin: f64,
    pub holds: bool,
    pub exact: Option<ExactVarianceDrop>,
}

/// Checks the variance drop for `estimator` (whose arity is `n`).
pub fn variance_drop_report(family: &Family, estimator: &Estimator, theta: f64, method: &Method) -> Result<VarianceDropReport> {
    family.check_theta(theta)?;
    let n = estimator.arity();
    match method {
        Method::Exact => {
            let dist = exact_dist(family, theta)?;
            let ex = exact::verify_variance_drop(estimator, &dist)?;
            let lhs = rational_to_f64(&ex.lhs);
            let rhs = rational_to_f64(&ex.rhs);
            Ok(VarianceDropReport {
                n,
                lhs,
                rhs,
                tolerance: 0.0,
                margin: rational_to_f64(&ex.margin()),
                holds: ex.holds,
                exact: Some(ex),
            })
        }
        Method::Numeric => Err(Error::Unsupported(
            "variance drop needs the exact or Monte Carlo method".into(),
        )),
        Method::MonteCarlo(mc) => {
            if mc.outer < 2 * MC_BATCHES {
                return Err(Error::InvalidArgument(format!(
                    "Monte Carlo needs at least {} replications",
                    2 * MC_BATCHES
                )));
            }
            let ext = estimator.extend();
            let pairs = map_indexed(mc.outer, mc.parallelism, |r| {
                let mut rng = rng_for(mc.seed, &[r as u64]);
                let draws = family.sample(theta, n + 1, &mut rng);
                (ext.eval(&draws), estimator.eval(&draws[..n]))
            });
            let scaled = |chunk: &[(f64, f64)]| -> (f64, f64) {
                let a: Vec<f64> = chunk.iter().map(|p| p.0).collect();
                let b: Vec<f64> = chunk.iter().map(|p| p.1).collect();
                ((n as f64 + 1.0) * mean_var(&a).1, n as f64 * mean_var(&b).1)
            };
            let (lhs, rhs) = scaled(&pairs);
            let size = mc.outer / MC_BATCHES;
            let diffs: Vec<f64> = (0..MC_BATCHES)
                .map(|b| {
                    let (l, r) = scaled(&pairs[b * size..(b + 1) * size]);
                    r - l
                })
                .collect();
            let se = (mean_var(&diffs).1 / MC_BATCHES as f64).sqrt();
            let tolerance = 3.0 * se;
            let margin = rhs - lhs + tolerance;
            Ok(VarianceDropReport {
                n,
                lhs,
                rhs,
                tolerance,
                margin,
                holds: margin >= 0.0,
                exact: None,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CltDiagnostic {
    pub n: usize,
    pub replications: usize,
    pub gamma: f64,
    /// Sample variance of `sqrt(n) (U_n - gamma)`.
    pub empirical_variance: f64,
    /// `m^2 v_1`.
    pub predicted_variance: f64,
    pub ratio: f64,
    /// KS distance of the standardized replicates from `N(0, predicted)`.
    pub ks_statistic: f64,
}

/// Simulates `sqrt(n) (U_n - gamma)` and compares it with its normal limit.
pub fn clt_diagnostic(
    family: &Family,
    kernel: &Kernel,
    theta: f64,
    n: usize,
    replications: usize,
    seed: u64,
    parallelism: Parallelism,
) -> Result<CltDiagnostic> {
    family.check_theta(theta)?;
    if replications < 100 {
        return Err(Error::InvalidArgument("at least 100 replications are required".into()));
    }
    let m = kernel.arity();
    if n < m {
        return Err(Error::SampleTooShort { len: n, arity: m });
    }
    let method = if family.finite_dist(theta).is_some() {
        Method::Exact
    } else {
        Method::Numeric
    };
    let gamma = conditional_projection(family, kernel, theta, &[], &method)?.value;
    let (v1, _) = projection_variance(family, kernel, theta, 1, &method)?;
    let mf = m as f64;
    let predicted_variance = mf * mf * v1;
    let root_n = (n as f64).sqrt();
    let reps = map_indexed(replications, parallelism, |r| -> Result<f64> {
        let mut rng: SimRng = rng_for(seed, &[r as u64]);
        let sample = Sample::new(family.sample(theta, n, &mut rng))?;
        let u = u_statistic_with(kernel, &sample, Parallelism::Sequential)?;
        Ok(root_n * (u - gamma))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let (_, empirical_variance) = mean_var(&reps);
    let ratio = if predicted_variance == 0.0 && empirical_variance == 0.0 {
        1.0
    } else {
        empirical_variance / predicted_variance
    };
    let ks_statistic = ks_normal(&reps, predicted_variance.sqrt());
    Ok(CltDiagnostic {
        n,
        replications,
        gamma,
        empirical_variance,
        predicted_variance,
        ratio,
        ks_statistic,
    })
}

fn ks_normal(values: &[f64], sd: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = if sd > 0.0 {
                0.5 * statrs::function::erf::erfc(-x / (sd * std::f64::consts::SQRT_2))
            } else if x >= 0.0 {
                1.0
            } else {
                0.0
            };
            ((i as f64 + 1.0) / n - f).abs().max((f - i as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}
