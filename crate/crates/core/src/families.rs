//! One-parameter distribution families: densities, scores, samplers, Fisher
//! information, information bounds, exponential-family construction and
//! maximum likelihood for the mean-value parametrization.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result, Side};
use crate::exact::FiniteDist;
use crate::exec::CompensatedSum;
use crate::hoeffding::{self, Method};
use crate::kernels::{Kernel, StatFn};
use crate::quadrature::{derivative, integrate, Integral, Tolerance};
use crate::scalar::{Rational, Scalar};
use crate::seeding::SimRng;
use crate::ustat::Sample;

/// Names resolvable by [`Family::by_name`].
pub const FAMILY_NAMES: &[&str] = &[
    "normal-mean",
    "normal-var",
    "poisson",
    "bernoulli",
    "exp-rate",
    "cauchy",
    "laplace",
];

#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    Line,
    HalfLine { lower: f64 },
    /// Integers `lower, lower + 1, ...`.
    Lattice { lower: i64 },
    Finite(Vec<f64>),
}

impl Support {
    pub fn is_continuous(&self) -> bool {
        matches!(self, Support::Line | Support::HalfLine { .. })
    }
}

type XThetaFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
type ThetaFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type BreaksFn = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;
type FillFn = Arc<dyn Fn(f64, &mut SimRng, &mut [f64]) + Send + Sync>;

/// A one-parameter family `p(x; theta)` with respect to Lebesgue or
/// counting measure. Immutable; all evaluation is pure.
#[derive(Clone)]
pub struct Family {
    name: String,
    domain: (f64, f64),
    support: Support,
    density: XThetaFn,
    score: XThetaFn,
    cdf: Option<XThetaFn>,
    sf: Option<XThetaFn>,
    sampler: FillFn,
    fisher_closed: Option<ThetaFn>,
    /// `E|X|^r < inf` iff `r < limit`; `None` when every moment exists.
    moment_limit: Option<f64>,
    breaks: BreaksFn,
    grid: Vec<f64>,
}

impl fmt::Debug for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Family")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("support", &self.support)
            .finish_non_exhaustive()
    }
}

impl Family {
    pub fn by_name(name: &str) -> Result<Family> {
        match name {
            "normal-mean" => Ok(normal_mean()),
            "normal-var" => Ok(normal_var()),
            "poisson" => Ok(poisson()),
            "bernoulli" => Ok(bernoulli()),
            "exp-rate" => Ok(exp_rate()),
            "cauchy" => Ok(cauchy()),
            "laplace" => Ok(laplace()),
            _ => Err(Error::UnknownFamily(name.to_string())),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Open parameter interval.
    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    /// Five parameter values used by the test battery.
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn check_theta(&self, theta: f64) -> Result<()> {
        if theta.is_finite() && theta > self.domain.0 && theta < self.domain.1 {
            Ok(())
        } else {
            Err(Error::ParameterOutOfDomain {
                family: self.name.clone(),
                theta,
            })
        }
    }

    pub fn density(&self, x: f64, theta: f64) -> f64 {
        (self.density)(x, theta)
    }

    /// `d/dtheta log p(x; theta)`.
    pub fn score(&self, x: f64, theta: f64) -> f64 {
        (self.score)(x, theta)
    }

    pub fn cdf(&self, x: f64, theta: f64) -> Option<f64> {
        self.cdf.as_ref().map(|f| f(x, theta))
    }

    pub fn sf(&self, x: f64, theta: f64) -> Option<f64> {
        self.sf.as_ref().map(|f| f(x, theta))
    }

    pub fn closed_form_fisher(&self, theta: f64) -> Option<f64> {
        self.fisher_closed.as_ref().map(|f| f(theta))
    }

    /// Whether `E|X|^order` is finite.
    pub fn has_moment(&self, order: f64) -> bool {
        self.moment_limit.is_none_or(|limit| order < limit)
    }

    /// Points where densities or scores are not smooth at `theta`.
    pub fn breaks(&self, theta: f64) -> Vec<f64> {
        (self.breaks)(theta)
    }

    /// Fills `out` with iid draws; the generator is advanced in place.
    pub fn sample_into(&self, theta: f64, rng: &mut SimRng, out: &mut [f64]) {
        (self.sampler)(theta, rng, out)
    }

    pub fn sample(&self, theta: f64, n: usize, rng: &mut SimRng) -> Vec<f64> {
        let mut out = vec![0.0; n];
        self.sample_into(theta, rng, &mut out);
        out
    }

    /// `E_theta f(X)` by quadrature (continuous) or summation (discrete).
    pub fn expect<F>(&self, theta: f64, f: F, extra_breaks: &[f64]) -> Result<Integral>
    where
        F: FnMut(f64) -> Result<f64>,
    {
        self.expect_with(theta, f, extra_breaks, Tolerance::default())
    }

    pub fn expect_with<F>(&self, theta: f64, mut f: F, extra_breaks: &[f64], tol: Tolerance) -> Result<Integral>
    where
        F: FnMut(f64) -> Result<f64>,
    {
        match &self.support {
            Support::Finite(atoms) => {
                let mut acc = CompensatedSum::new();
                for &x in atoms {
                    let p = self.density(x, theta);
                    if p > 0.0 {
                        acc.add(p * f(x)?);
                    }
                }
                Ok(Integral {
                    value: acc.value(),
                    error: 0.0,
                    evaluations: atoms.len(),
                })
            }
            Support::Lattice { lower } => self.lattice_sum(theta, *lower, f),
            Support::Line | Support::HalfLine { .. } => {
                let lo = match self.support {
                    Support::HalfLine { lower } => lower,
                    _ => f64::NEG_INFINITY,
                };
                let mut breaks = self.breaks(theta);
                breaks.extend_from_slice(extra_breaks);
                integrate(
                    |x| {
                        let p = self.density(x, theta);
                        if p == 0.0 {
                            Ok(0.0)
                        } else {
                            Ok(p * f(x)?)
                        }
                    },
                    lo,
                    f64::INFINITY,
                    &breaks,
                    tol,
                )
            }
        }
    }

    fn lattice_sum<F>(&self, theta: f64, lower: i64, mut f: F) -> Result<Integral>
    where
        F: FnMut(f64) -> Result<f64>,
    {
        const MAX_TERMS: usize = 1_000_000;
        let mut acc = CompensatedSum::new();
        let mut mass = 0.0;
        let mut prev = 0.0;
        for i in 0..MAX_TERMS {
            let x = (lower + i as i64) as f64;
            let p = self.density(x, theta);
            if p > 0.0 {
                acc.add(p * f(x)?);
            }
            mass += p;
            if i > 0 && p < 1e-20 && p <= prev && mass > 1.0 - 1e-12 {
                return Ok(Integral {
                    value: acc.value(),
                    error: 0.0,
                    evaluations: i + 1,
                });
            }
            prev = p;
        }
        Err(Error::Unsupported(format!(
            "lattice sum for {} did not terminate within {MAX_TERMS} terms",
            self.name
        )))
    }

    /// The atoms of a finite-support family as an exact distribution. Atom
    /// values and probabilities are lifted exactly from their `f64` values,
    /// then probabilities are renormalized to sum to one.
    pub fn finite_dist(&self, theta: f64) -> Option<Result<FiniteDist>> {
        let Support::Finite(atoms) = &self.support else {
            return None;
        };
        let lifted: Vec<(Rational, Rational)> = atoms
            .iter()
            .map(|&x| (Rational::from_f64(x), Rational::from_f64(self.density(x, theta))))
            .filter(|(_, p)| *p > Rational::zero())
            .collect();
        let total: Rational = lifted.iter().map(|(_, p)| p.clone()).sum();
        Some(FiniteDist::new(
            lifted.into_iter().map(|(v, p)| (v, p / total.clone())).collect(),
        ))
    }
}

use num_traits::Zero;

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn uniform01(rng: &mut SimRng) -> f64 {
    rng.random::<f64>()
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `N(theta, 1)`.
pub fn normal_mean() -> Family {
    Family {
        name: "normal-mean".into(),
        domain: (f64::NEG_INFINITY, f64::INFINITY),
        support: Support::Line,
        density: Arc::new(|x, t| (-0.5 * (x - t) * (x - t)).exp() / (2.0 * PI).sqrt()),
        score: Arc::new(|x, t| x - t),
        cdf: Some(Arc::new(|x, t| std_normal_cdf(x - t))),
        sf: Some(Arc::new(|x, t| std_normal_cdf(t - x))),
        sampler: Arc::new(|t, rng, out| {
            for o in out {
                let z: f64 = rng.sample(StandardNormal);
                *o = t + z;
            }
        }),
        fisher_closed: Some(Arc::new(|_| 1.0)),
        moment_limit: None,
        breaks: Arc::new(|t| vec![t]),
        grid: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
    }
}

/// `N(0, theta)`, theta the variance.
pub fn normal_var() -> Family {
    Family {
        name: "normal-var".into(),
        domain: (0.0, f64::INFINITY),
        support: Support::Line,
        density: Arc::new(|x, t| (-0.5 * x * x / t).exp() / (2.0 * PI * t).sqrt()),
        score: Arc::new(|x, t| -0.5 / t + 0.5 * x * x / (t * t)),
        cdf: Some(Arc::new(|x, t| std_normal_cdf(x / t.sqrt()))),
        sf: Some(Arc::new(|x, t| std_normal_cdf(-x / t.sqrt()))),
        sampler: Arc::new(|t, rng, out| {
            let sd = t.sqrt();
            for o in out {
                let z: f64 = rng.sample(StandardNormal);
                *o = sd * z;
            }
        }),
        fisher_closed: Some(Arc::new(|t| 0.5 / (t * t))),
        moment_limit: None,
        breaks: Arc::new(|_| vec![0.0]),
        grid: vec![0.5, 1.0, 2.0, 3.0, 4.0],
    }
}

fn poisson_pmf(x: f64, t: f64) -> f64 {
    if x < 0.0 || x.fract() != 0.0 {
        return 0.0;
    }
    (x * t.ln() - t - ln_gamma(x + 1.0)).exp()
}

fn poisson_cdf(x: f64, t: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    let k = x.floor() as i64;
    (0..=k).map(|i| poisson_pmf(i as f64, t)).collect::<CompensatedSum>().value().min(1.0)
}

/// Inversion by sequential search; exact and with a bounded loop.
fn poisson_draw(t: f64, rng: &mut SimRng) -> f64 {
    if t > 30.0 {
        let d = rand_distr::Poisson::new(t).expect("positive rate");
        return d.sample(rng);
    }
    let u = uniform01(rng);
    let mut p = (-t).exp();
    let mut cdf = p;
    let mut x = 0u32;
    while u > cdf && x < 1000 {
        x += 1;
        p *= t / f64::from(x);
        cdf += p;
    }
    f64::from(x)
}

pub fn poisson() -> Family {
    Family {
        name: "poisson".into(),
        domain: (0.0, f64::INFINITY),
        support: Support::Lattice { lower: 0 },
        density: Arc::new(poisson_pmf),
        score: Arc::new(|x, t| x / t - 1.0),
        cdf: Some(Arc::new(poisson_cdf)),
        sf: Some(Arc::new(|x, t| 1.0 - poisson_cdf(x, t))),
        sampler: Arc::new(|t, rng, out| {
            for o in out {
                *o = poisson_draw(t, rng);
            }
        }),
        fisher_closed: Some(Arc::new(|t| 1.0 / t)),
        moment_limit: None,
        breaks: Arc::new(|_| Vec::new()),
        grid: vec![0.5, 1.0, 2.0, 5.0, 10.0],
    }
}

pub fn bernoulli() -> Family {
    Family {
        name: "bernoulli".into(),
        domain: (0.0, 1.0),
        support: Support::Finite(vec![0.0, 1.0]),
        density: Arc::new(|x, t| {
            if x == 1.0 {
                t
            } else if x == 0.0 {
                1.0 - t
            } else {
                0.0
            }
        }),
        score: Arc::new(|x, t| (x - t) / (t * (1.0 - t))),
        cdf: Some(Arc::new(|x, t| {
            if x < 0.0 {
                0.0
            } else if x < 1.0 {
                1.0 - t
            } else {
                1.0
            }
        })),
        sf: Some(Arc::new(|x, t| {
            if x < 0.0 {
                1.0
            } else if x < 1.0 {
                t
            } else {
                0.0
            }
        })),
        sampler: Arc::new(|t, rng, out| {
            for o in out {
                *o = if uniform01(rng) < t { 1.0 } else { 0.0 };
            }
        }),
        fisher_closed: Some(Arc::new(|t| 1.0 / (t * (1.0 - t)))),
        moment_limit: None,
        breaks: Arc::new(|_| Vec::new()),
        grid: vec![0.1, 0.25, 0.5, 0.75, 0.9],
    }
}

/// Exponential with rate theta.
pub fn exp_rate() -> Family {
    Family {
        name: "exp-rate".into(),
        domain: (0.0, f64::INFINITY),
        support: Support::HalfLine { lower: 0.0 },
        density: Arc::new(|x, t| if x < 0.0 { 0.0 } else { t * (-t * x).exp() }),
        score: Arc::new(|x, t| 1.0 / t - x),
        cdf: Some(Arc::new(|x, t| if x <= 0.0 { 0.0 } else { -(-t * x).exp_m1() })),
        sf: Some(Arc::new(|x, t| if x <= 0.0 { 1.0 } else { (-t * x).exp() })),
        sampler: Arc::new(|t, rng, out| {
            for o in out {
                *o = -(-uniform01(rng)).ln_1p() / t;
            }
        }),
        fisher_closed: Some(Arc::new(|t| 1.0 / (t * t))),
        moment_limit: None,
        breaks: Arc::new(|_| Vec::new()),
        grid: vec![0.5, 1.0, 2.0, 3.0, 5.0],
    }
}

fn cauchy_cdf(z: f64) -> f64 {
    if z < 0.0 {
        (-1.0 / z).atan() / PI
    } else {
        0.5 + z.atan() / PI
    }
}

/// Cauchy location family with unit scale.
pub fn cauchy() -> Family {
    Family {
        name: "cauchy".into(),
        domain: (f64::NEG_INFINITY, f64::INFINITY),
        support: Support::Line,
        density: Arc::new(|x, t| 1.0 / (PI * (1.0 + (x - t) * (x - t)))),
        score: Arc::new(|x, t| {
            let z = x - t;
            2.0 * z / (1.0 + z * z)
        }),
        cdf: Some(Arc::new(|x, t| cauchy_cdf(x - t))),
        sf: Some(Arc::new(|x, t| cauchy_cdf(t - x))),
        sampler: Arc::new(|t, rng, out| {
            for o in out {
                *o = t + (PI * (uniform01(rng) - 0.5)).tan();
            }
        }),
        fisher_closed: Some(Arc::new(|_| 0.5)),
        moment_limit: Some(1.0),
        breaks: Arc::new(|t| vec![t]),
        grid: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
    }
}

fn laplace_cdf(z: f64) -> f64 {
    if z < 0.0 {
        0.5 * z.exp()
    } else {
        1.0 - 0.5 * (-z).exp()
    }
}

/// Laplace location family with unit scale.
pub fn laplace() -> Family {
    Family {
        name: "laplace".into(),
        domain: (f64::NEG_INFINITY, f64::INFINITY),
        support: Support::Line,
        density: Arc::new(|x, t| 0.5 * (-(x - t).abs()).exp()),
        score: Arc::new(|x, t| sign(x - t)),
        cdf: Some(Arc::new(|x, t| laplace_cdf(x - t))),
        sf: Some(Arc::new(|x, t| laplace_cdf(t - x))),
        sampler: Arc::new(|t, rng, out| {
            for o in out {
                let u = uniform01(rng) - 0.5;
                *o = t - sign(u) * (-2.0 * u.abs()).ln_1p();
            }
        }),
        fisher_closed: Some(Arc::new(|_| 1.0)),
        moment_limit: None,
        breaks: Arc::new(|t| vec![t]),
        grid: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
    }
}

/// Kolmogorov–Smirnov distance between the empirical CDF of `draws` and the
/// family CDF. Handles atoms by comparing both one-sided limits.
pub fn ks_distance(family: &Family, theta: f64, draws: &[f64]) -> Result<f64> {
    if family.cdf.is_none() {
        return Err(Error::Unsupported(format!("{} has no closed-form CDF", family.name)));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let discrete = !family.support.is_continuous();
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let x = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == x {
            j += 1;
        }
        let f_at = family.cdf(x, theta).unwrap_or(f64::NAN);
        let f_before = if discrete { f_at - family.density(x, theta) } else { f_at };
        d = d.max((j as f64 / n - f_at).abs()).max((f_before - i as f64 / n).abs());
        i = j;
    }
    Ok(d)
}

/// Fisher information by quadrature/summation, with the closed form (when
/// one exists) alongside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherInfo {
    pub value: f64,
    pub error: f64,
    pub closed_form: Option<f64>,
    pub discrepancy: Option<f64>,
}

pub fn fisher_info(family: &Family, theta: f64) -> Result<FisherInfo> {
    family.check_theta(theta)?;
    let r = family.expect(
        theta,
        |x| {
            let s = family.score(x, theta);
            Ok(s * s)
        },
        &[],
    )?;
    let closed_form = family.closed_form_fisher(theta);
    Ok(FisherInfo {
        value: r.value,
        error: r.error,
        closed_form,
        discrepancy: closed_form.map(|c| (c - r.value).abs()),
    })
}

/// `E_theta h(X)`; errors when the mean does not exist.
pub fn mean_of(family: &Family, h: &StatFn, theta: f64) -> Result<f64> {
    if let Some(g) = h.growth() {
        if g > 0 && !family.has_moment(f64::from(g)) {
            return Err(Error::Unsupported(format!(
                "E {}(X) does not exist under {}",
                h.label(),
                family.name
            )));
        }
    }
    Ok(family.expect(theta, |x| Ok(h.eval(x)), &h.breaks())?.value)
}

fn mean_derivative(family: &Family, h: &StatFn, theta: f64) -> Result<f64> {
    let (lo, hi) = family.domain;
    derivative(|t| mean_of(family, h, t), theta, lo, hi)
}

/// Cramér–Rao bound `|gamma'(theta)|^2 / (n I(theta))` for unbiased
/// estimators of `gamma(theta) = E h(X)`.
pub fn cr_bound(family: &Family, h: &StatFn, n: usize, theta: f64) -> Result<f64> {
    family.check_theta(theta)?;
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let gp = mean_derivative(family, h, theta)?;
    let info = fisher_info(family, theta)?.value;
    Ok(gp * gp / (n as f64 * info))
}

/// Information bound from a single statistic `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InformationBound {
    /// `|mu'|^2 / sigma^2`; zero when `h` has infinite variance.
    pub bound: f64,
    pub fisher: f64,
    pub mu: Option<f64>,
    pub mu_prime: Option<f64>,
    /// Infinite when `h(X)` is not square-integrable.
    pub sigma2: f64,
    /// `fisher - bound`.
    pub gap: f64,
    pub tolerance: f64,
    /// `gap + tolerance`; the verdict holds iff this is nonnegative.
    pub margin: f64,
    pub holds: bool,
}

struct HMoments {
    mu: f64,
    mu_prime: f64,
    sigma2: f64,
}

/// `None` when `h(X)` has no finite variance under the family.
fn h_moments(family: &Family, h: &StatFn, theta: f64) -> Result<Option<HMoments>> {
    if let Some(g) = h.growth() {
        if g > 0 && !family.has_moment(2.0 * f64::from(g)) {
            return Ok(None);
        }
    }
    let mu = mean_of(family, h, theta)?;
    let sigma2 = family
        .expect(
            theta,
            |x| {
                let d = h.eval(x) - mu;
                Ok(d * d)
            },
            &h.breaks(),
        )?
        .value;
    if sigma2 <= 1e-13 * (1.0 + mu * mu) {
        return Err(Error::Degenerate(format!("{}(X) under {}", h.label(), family.name)));
    }
    let mu_prime = mean_derivative(family, h, theta)?;
    Ok(Some(HMoments { mu, mu_prime, sigma2 }))
}

/// `I(theta) >= |mu'(theta)|^2 / sigma^2(theta)` for a parameter-free `h`.
pub fn lemma3_bound(family: &Family, h: &StatFn, theta: f64) -> Result<InformationBound> {
    family.check_theta(theta)?;
    let fisher = fisher_info(family, theta)?.value;
    let (bound, mu, mu_prime, sigma2) = match h_moments(family, h, theta)? {
        Some(m) => (m.mu_prime * m.mu_prime / m.sigma2, Some(m.mu), Some(m.mu_prime), m.sigma2),
        None => (0.0, None, None, f64::INFINITY),
    };
    let tolerance = 1e-7 * fisher.max(1.0);
    let gap = fisher - bound;
    let margin = gap + tolerance;
    Ok(InformationBound {
        bound,
        fisher,
        mu,
        mu_prime,
        sigma2,
        gap,
        tolerance,
        margin,
        holds: margin >= 0.0,
    })
}

/// `E[(J - a (h - mu))^2]` with `a = mu' / sigma^2`: the squared distance of
/// the score from its projection onto `span{1, h}`. When `h` is not
/// square-integrable the projection is onto constants only (`a = 0`).
pub fn projection_residual(family: &Family, h: &StatFn, theta: f64) -> Result<f64> {
    family.check_theta(theta)?;
    let (a, mu) = match h_moments(family, h, theta)? {
        Some(m) => (m.mu_prime / m.sigma2, m.mu),
        None => (0.0, 0.0),
    };
    let r = family.expect(
        theta,
        |x| {
            let hx = if a == 0.0 { 0.0 } else { h.eval(x) - mu };
            let d = family.score(x, theta) - a * hx;
            Ok(d * d)
        },
        &h.breaks(),
    )?;
    Ok(r.value)
}

/// Asymptotic efficiency of the U-statistic with `kernel`.
#[derive(Debug, Clone, PartialEq)]
pub struct Efficiency {
    pub aseff: f64,
    pub m: usize,
    pub gamma: f64,
    pub gamma_prime: f64,
    pub fisher: f64,
    pub v1: f64,
    /// Standard error of `v1` under Monte Carlo.
    pub v1_std_err: Option<f64>,
    /// `1 / m^2`.
    pub reference: f64,
}

/// `(|gamma'|^2 / I) / (m^2 v_1)`. `gamma`, `gamma'` and `I` are always
/// computed numerically; `v_1` follows `method`.
pub fn aseff(family: &Family, kernel: &Kernel, theta: f64, method: &Method) -> Result<Efficiency> {
    family.check_theta(theta)?;
    let m = kernel.arity();
    let gamma_method = match method {
        Method::Exact => Method::Exact,
        _ => Method::Numeric,
    };
    let gamma_at = |t: f64| hoeffding::conditional_projection(family, kernel, t, &[], &gamma_method).map(|p| p.value);
    let gamma = gamma_at(theta)?;
    let (lo, hi) = family.domain;
    let gamma_prime = derivative(gamma_at, theta, lo, hi)?;
    let fisher = fisher_info(family, theta)?.value;
    let (v1, v1_std_err) = hoeffding::projection_variance(family, kernel, theta, 1, method)?;
    if v1.abs() <= 1e-14 {
        return Err(Error::Degenerate(format!("first projection of {}", kernel.label())));
    }
    let mf = m as f64;
    Ok(Efficiency {
        aseff: gamma_prime * gamma_prime / fisher / (mf * mf * v1),
        m,
        gamma,
        gamma_prime,
        fisher,
        v1,
        v1_std_err,
        reference: 1.0 / (mf * mf),
    })
}

/// Coefficients of `p(x; theta) = exp{A(theta) h(x) + B(theta) + g(x)}`.
#[derive(Clone)]
pub struct ExponentialFamilySpec {
    pub name: String,
    pub domain: (f64, f64),
    pub support: Support,
    pub a: ThetaFn,
    pub b: ThetaFn,
    pub g: ThetaFn,
    pub h: StatFn,
    /// Exact derivatives; central differences are used when absent.
    pub a_prime: Option<ThetaFn>,
    pub b_prime: Option<ThetaFn>,
    /// Parameter values where normalization and monotonicity are checked.
    pub check_grid: Vec<f64>,
}

impl fmt::Debug for ExponentialFamilySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExponentialFamilySpec")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("support", &self.support)
            .field("h", &self.h)
            .finish_non_exhaustive()
    }
}

impl ExponentialFamilySpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        domain: (f64, f64),
        support: Support,
        a: impl Fn(f64) -> f64 + Send + Sync + 'static,
        b: impl Fn(f64) -> f64 + Send + Sync + 'static,
        g: impl Fn(f64) -> f64 + Send + Sync + 'static,
        h: StatFn,
        check_grid: Vec<f64>,
    ) -> Self {
        ExponentialFamilySpec {
            name: name.to_string(),
            domain,
            support,
            a: Arc::new(a),
            b: Arc::new(b),
            g: Arc::new(g),
            h,
            a_prime: None,
            b_prime: None,
            check_grid,
        }
    }

    pub fn with_derivatives(
        mut self,
        a_prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
        b_prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.a_prime = Some(Arc::new(a_prime));
        self.b_prime = Some(Arc::new(b_prime));
        self
    }

    /// `N(theta, 1)` in canonical form.
    pub fn normal_mean() -> Self {
        let log_norm = 0.5 * (2.0 * PI).ln();
        Self::new(
            "normal-mean",
            (f64::NEG_INFINITY, f64::INFINITY),
            Support::Line,
            |t| t,
            move |t| -0.5 * t * t - log_norm,
            |x| -0.5 * x * x,
            StatFn::Identity,
            vec![-2.0, -1.0, 0.0, 1.0, 2.0],
        )
        .with_derivatives(|_| 1.0, |t| -t)
    }

    pub fn poisson() -> Self {
        Self::new(
            "poisson",
            (0.0, f64::INFINITY),
            Support::Lattice { lower: 0 },
            f64::ln,
            |t| -t,
            |x| -ln_gamma(x + 1.0),
            StatFn::Identity,
            vec![0.5, 1.0, 2.0, 5.0, 10.0],
        )
        .with_derivatives(|t| 1.0 / t, |_| -1.0)
    }

    /// Exponential rate family written with `h(x) = -x`, `A(theta) = theta`.
    pub fn exp_rate() -> Self {
        let neg = StatFn::Custom {
            label: "neg".into(),
            f: Arc::new(|x: f64| -x),
            growth: Some(1),
            breaks: Vec::new(),
        };
        Self::new(
            "exp-rate",
            (0.0, f64::INFINITY),
            Support::HalfLine { lower: 0.0 },
            |t| t,
            f64::ln,
            |_| 0.0,
            neg,
            vec![0.5, 1.0, 2.0, 3.0, 5.0],
        )
        .with_derivatives(|_| 1.0, |t| 1.0 / t)
    }

    pub fn bernoulli() -> Self {
        Self::new(
            "bernoulli",
            (0.0, 1.0),
            Support::Finite(vec![0.0, 1.0]),
            |t| (t / (1.0 - t)).ln(),
            |t| (-t).ln_1p(),
            |_| 0.0,
            StatFn::Identity,
            vec![0.1, 0.25, 0.5, 0.75, 0.9],
        )
        .with_derivatives(|t| 1.0 / (t * (1.0 - t)), |t| -1.0 / (1.0 - t))
    }
}

/// A family built from an [`ExponentialFamilySpec`].
#[derive(Debug, Clone)]
pub struct ExponentialFamily {
    spec: ExponentialFamilySpec,
    family: Family,
}

impl ExponentialFamily {
    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn spec(&self) -> &ExponentialFamilySpec {
        &self.spec
    }

    /// `gamma(theta) = E_theta h(X)`.
    pub fn mean_map(&self, theta: f64) -> Result<f64> {
        self.family.check_theta(theta)?;
        mean_of(&self.family, &self.spec.h, theta)
    }
}

fn numeric_derivative(f: ThetaFn, domain: (f64, f64)) -> ThetaFn {
    Arc::new(move |t| derivative(|s| Ok(f(s)), t, domain.0, domain.1).unwrap_or(f64::NAN))
}

/// Builds the density, score and sampler of an exponential family and
/// checks normalization (to 1e-6) and strict monotonicity of the mean map on
/// the spec's grid.
pub fn build_exponential_family(spec: ExponentialFamilySpec) -> Result<ExponentialFamily> {
    let (a, b, g, h) = (spec.a.clone(), spec.b.clone(), spec.g.clone(), spec.h.clone());
    let a_prime = spec.a_prime.clone().unwrap_or_else(|| numeric_derivative(a.clone(), spec.domain));
    let b_prime = spec.b_prime.clone().unwrap_or_else(|| numeric_derivative(b.clone(), spec.domain));

    let support = spec.support.clone();
    let in_support = {
        let support = support.clone();
        move |x: f64| match &support {
            Support::Line => true,
            Support::HalfLine { lower } => x >= *lower,
            Support::Lattice { lower } => x.fract() == 0.0 && x >= *lower as f64,
            Support::Finite(atoms) => atoms.contains(&x),
        }
    };
    let density: XThetaFn = {
        let (a, b, g, h) = (a.clone(), b.clone(), g.clone(), h.clone());
        Arc::new(move |x, t| {
            if in_support(x) {
                (a(t) * h.eval(x) + b(t) + g(x)).exp()
            } else {
                0.0
            }
        })
    };
    let score: XThetaFn = {
        let h = h.clone();
        Arc::new(move |x, t| a_prime(t) * h.eval(x) + b_prime(t))
    };

    let mut family = Family {
        name: spec.name.clone(),
        domain: spec.domain,
        support: support.clone(),
        density: density.clone(),
        score,
        cdf: None,
        sf: None,
        sampler: Arc::new(|_, _, _| {}),
        fisher_closed: None,
        moment_limit: None,
        breaks: {
            let hb = h.breaks();
            Arc::new(move |_| hb.clone())
        },
        grid: spec.check_grid.clone(),
    };
    family.sampler = match &support {
        Support::Line | Support::HalfLine { .. } => grid_sampler(family.clone()),
        Support::Lattice { .. } | Support::Finite(_) => alias_sampler(family.clone()),
    };

    for &t in &spec.check_grid {
        family.check_theta(t)?;
        let mass = family.expect(t, |_| Ok(1.0), &[])?.value;
        if (mass - 1.0).abs() > 1e-6 {
            return Err(Error::Normalization { theta: t, mass });
        }
    }
    let built = ExponentialFamily { spec, family };
    let means = built
        .spec
        .check_grid
        .iter()
        .map(|&t| built.mean_map(t))
        .collect::<Result<Vec<_>>>()?;
    let increasing = means.windows(2).all(|w| w[1] > w[0]);
    let decreasing = means.windows(2).all(|w| w[1] < w[0]);
    if means.len() > 1 && !(increasing || decreasing) {
        return Err(Error::NotMonotone);
    }
    Ok(built)
}

/// Inverse-CDF sampling from a cumulative table built per call.
fn grid_sampler(family: Family) -> FillFn {
    Arc::new(move |t, rng, out| {
        let table = match InverseCdfTable::build(&family, t) {
            Ok(table) => table,
            Err(_) => {
                out.fill(f64::NAN);
                return;
            }
        };
        for o in out {
            *o = table.quantile(uniform01(rng));
        }
    })
}

struct InverseCdfTable {
    xs: Vec<f64>,
    cdf: Vec<f64>,
}

impl InverseCdfTable {
    const POINTS: usize = 1 << 15;

    fn build(family: &Family, t: f64) -> Result<Self> {
        let mean = family.expect(t, Ok, &[])?.value;
        let var = family.expect(t, |x| Ok((x - mean) * (x - mean)), &[])?.value;
        let sd = var.sqrt();
        let (lo, hi) = match family.support {
            Support::HalfLine { lower } => (lower, mean + 40.0 * sd),
            _ => (mean - 14.0 * sd, mean + 14.0 * sd),
        };
        let step = (hi - lo) / (Self::POINTS - 1) as f64;
        let xs: Vec<f64> = (0..Self::POINTS).map(|i| lo + step * i as f64).collect();
        let dens: Vec<f64> = xs.iter().map(|&x| family.density(x, t)).collect();
        let mut cdf = Vec::with_capacity(Self::POINTS);
        let mut acc = 0.0;
        cdf.push(0.0);
        for w in dens.windows(2) {
            acc += 0.5 * step * (w[0] + w[1]);
            cdf.push(acc);
        }
        for c in &mut cdf {
            *c /= acc;
        }
        Ok(InverseCdfTable { xs, cdf })
    }

    fn quantile(&self, u: f64) -> f64 {
        let i = self.cdf.partition_point(|&c| c < u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        self.xs[i - 1] + frac * (self.xs[i] - self.xs[i - 1])
    }
}

/// Walker alias sampling over the (truncated) support, built per call.
fn alias_sampler(family: Family) -> FillFn {
    Arc::new(move |t, rng, out| {
        let mut atoms = Vec::new();
        let mut weights = Vec::new();
        let _ = family.expect(
            t,
            |x| {
                atoms.push(x);
                weights.push(family.density(x, t));
                Ok(0.0)
            },
            &[],
        );
        match WeightedAliasIndex::new(weights) {
            Ok(alias) => {
                for o in out {
                    *o = atoms[alias.sample(rng)];
                }
            }
            Err(_) => out.fill(f64::NAN),
        }
    })
}

/// Solves `gamma(theta) = mean of h(x_i)`: geometric bracketing from an
/// interior point, then bisection to `|gamma(theta) - target| <= 1e-10`.
pub fn mle_solve(ef: &ExponentialFamily, sample: &Sample) -> Result<f64> {
    let h = &ef.spec.h;
    let target = sample.values().iter().map(|&x| h.eval(x)).collect::<CompensatedSum>().value()
        / sample.len() as f64;
    let (lo_dom, hi_dom) = ef.family.domain;
    let start = match (lo_dom.is_finite(), hi_dom.is_finite()) {
        (true, true) => 0.5 * (lo_dom + hi_dom),
        (true, false) => lo_dom + 1.0,
        (false, true) => hi_dom - 1.0,
        (false, false) => 0.0,
    };
    let gamma = |t: f64| ef.mean_map(t);
    let g0 = gamma(start)?;
    if (g0 - target).abs() <= 1e-10 {
        return Ok(start);
    }
    let probe = |k: i32, upward: bool| -> f64 {
        let scale = 2f64.powi(k);
        if upward {
            if hi_dom.is_finite() {
                hi_dom - (hi_dom - start) / scale
            } else {
                start + (scale - 1.0) * start.abs().max(1.0)
            }
        } else if lo_dom.is_finite() {
            lo_dom + (start - lo_dom) / scale
        } else {
            start - (scale - 1.0) * start.abs().max(1.0)
        }
    };
    // Search both directions; the mean map is monotone so at most one side
    // can bracket the target.
    let mut bracket = None;
    let mut side_ranges = Vec::new();
    for upward in [true, false] {
        let mut prev = (start, g0);
        for k in 1..=60 {
            let t = probe(k, upward);
            let Ok(gt) = gamma(t) else { break };
            if (gt - target) * (prev.1 - target) <= 0.0 {
                bracket = Some((prev, (t, gt)));
                break;
            }
            prev = (t, gt);
        }
        if bracket.is_some() {
            break;
        }
        side_ranges.push(prev.1);
    }
    let Some((mut a, mut b)) = bracket else {
        let lowest = side_ranges.iter().copied().fold(g0, f64::min);
        let side = if target < lowest { Side::Below } else { Side::Above };
        return Err(Error::OutOfRange { target, side });
    };
    if a.1 == b.1 {
        return Err(Error::NotMonotone);
    }
    for _ in 0..400 {
        let mid = 0.5 * (a.0 + b.0);
        let gm = gamma(mid)?;
        if (gm - target).abs() <= 1e-10 {
            return Ok(mid);
        }
        if (gm - target) * (a.1 - target) <= 0.0 {
            b = (mid, gm);
        } else {
            a = (mid, gm);
        }
        if mid == a.0 && mid == b.0 {
            break;
        }
    }
    let best = if (a.1 - target).abs() <= (b.1 - target).abs() { a } else { b };
    if (best.1 - target).abs() <= 1e-10 {
        Ok(best.0)
    } else {
        Err(Error::Quadrature {
            value: best.0,
            error: (best.1 - target).abs(),
        })
    }
}
