//! The experiment kinds behind the result tables.

use anyhow::{bail, Context, Result};
use indexmap::IndexMap;
use jkext::exact::{exact_var, FiniteDist};
use jkext::exec::{map_indexed, CompensatedSum};
use jkext::families::{aseff, Family, Support};
use jkext::hoeffding::{clt_diagnostic, variance_drop_report, Method, MonteCarlo};
use jkext::kernels::Kernel;
use jkext::lstat::conjecture16_check;
use jkext::seeding::{derive_seed, label_hash, rng_for};
use jkext::{Estimator, Parallelism};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::table::{Cell, ResultRow};

/// Default half-sizes for `conjecture16` when the config gives none.
pub const DEFAULT_CONJECTURE_RANGE: std::ops::RangeInclusive<usize> = 1..=200;

/// Seed of the `row`-th row; replications derive their own seeds from it.
pub fn row_seed(base: u64, kind: ExperimentKind, row: usize) -> u64 {
    derive_seed(base, &[label_hash(kind.label()), row as u64])
}

/// Runs the experiment. Output depends only on the config, never on
/// `parallelism`.
pub fn run_experiment(cfg: &ExperimentConfig, parallelism: Parallelism) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let rows = match cfg.kind {
        ExperimentKind::EfficiencyCurve => efficiency_curve(cfg)?,
        ExperimentKind::VarianceDrop => variance_drop(cfg, parallelism)?,
        ExperimentKind::Clt => clt(cfg, parallelism)?,
        ExperimentKind::MedianStudy => median_study(cfg, parallelism)?,
        ExperimentKind::Conjecture16 => conjecture16(cfg)?,
    };
    for r in &rows {
        r.check_finite()?;
    }
    Ok(rows)
}

fn base_row(cfg: &ExperimentConfig, row: usize, theta: Option<f64>, kernel: &str, m: usize, n: usize) -> ResultRow {
    ResultRow {
        kind: cfg.kind.label().to_string(),
        family: cfg.family.clone().unwrap_or_default(),
        theta,
        kernel: kernel.to_string(),
        m,
        n,
        seed: row_seed(cfg.seed, cfg.kind, row),
        replications: cfg.replications,
        cells: IndexMap::new(),
    }
}

fn exact_or_numeric(family: &Family) -> Method {
    if matches!(family.support(), Support::Finite(_)) {
        Method::Exact
    } else {
        Method::Numeric
    }
}

fn efficiency_curve(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let family = cfg.family()?;
    let kernel = cfg.kernel()?;
    let m = kernel.arity();
    let ns = if cfg.n.is_empty() { vec![m] } else { cfg.n.clone() };
    let method = exact_or_numeric(&family);
    let mut rows = Vec::new();
    for &theta in &cfg.thetas {
        let e = aseff(&family, &kernel, theta, &method)
            .with_context(|| format!("efficiency of {} under {} at {theta}", kernel.label(), family.name()))?;
        for &n in &ns {
            let mf = m as f64;
            let idx = rows.len();
            // Cramér–Rao limit for unbiased estimators of gamma from n draws
            let cr = e.gamma_prime * e.gamma_prime / (n as f64 * e.fisher);
            rows.push(
                base_row(cfg, idx, Some(theta), kernel.label(), m, n)
                    .with("aseff", e.aseff)
                    .with("reference", e.reference)
                    .with("gamma", e.gamma)
                    .with("gamma_prime", e.gamma_prime)
                    .with("fisher", e.fisher)
                    .with("v1", e.v1)
                    .with("asymptotic_variance", mf * mf * e.v1 / n as f64)
                    .with("cr_bound", cr),
            );
        }
    }
    Ok(rows)
}

/// `median` means the plain sample median of size n; any other label is a
/// kernel whose U-statistic on n points is the estimator.
fn estimator_for(label: &str, n: usize) -> Result<Estimator> {
    if label == "median" {
        return Ok(Estimator::median(n));
    }
    let kernel = Kernel::from_label(label)?;
    if n == kernel.arity() {
        Ok(Estimator::from_kernel(kernel))
    } else {
        Ok(Estimator::u_statistic(kernel, n)?)
    }
}

fn variance_drop(cfg: &ExperimentConfig, parallelism: Parallelism) -> Result<Vec<ResultRow>> {
    let family = cfg.family()?;
    let label = cfg.kernel.clone().unwrap_or_default();
    let mut rows = Vec::new();
    for &theta in &cfg.thetas {
        for &n in &cfg.n {
            let est = estimator_for(&label, n)?;
            let idx = rows.len();
            let row = base_row(cfg, idx, Some(theta), &label, est.arity(), n);
            let method = if family.finite_dist(theta).is_some() {
                Method::Exact
            } else {
                Method::MonteCarlo(MonteCarlo::new(cfg.replications, 1, row.seed).with_parallelism(parallelism))
            };
            let r = variance_drop_report(&family, &est, theta, &method)?;
            let (lhs_exact, rhs_exact) = match &r.exact {
                Some(ex) => (Cell::Fraction(ex.lhs.clone()), Cell::Fraction(ex.rhs.clone())),
                None => (Cell::Missing, Cell::Missing),
            };
            rows.push(
                row.with("method", if r.exact.is_some() { "exact" } else { "monte-carlo" })
                    .with("lhs", r.lhs)
                    .with("rhs", r.rhs)
                    .with("lhs_exact", lhs_exact)
                    .with("rhs_exact", rhs_exact)
                    .with("tolerance", r.tolerance)
                    .with("margin", r.margin)
                    .with("holds", r.holds),
            );
        }
    }
    Ok(rows)
}

fn clt(cfg: &ExperimentConfig, parallelism: Parallelism) -> Result<Vec<ResultRow>> {
    let family = cfg.family()?;
    let kernel = cfg.kernel()?;
    let mut rows = Vec::new();
    for &theta in &cfg.thetas {
        for &n in &cfg.n {
            let idx = rows.len();
            let row = base_row(cfg, idx, Some(theta), kernel.label(), kernel.arity(), n);
            let d = clt_diagnostic(&family, &kernel, theta, n, cfg.replications, row.seed, parallelism)?;
            rows.push(
                row.with("gamma", d.gamma)
                    .with("empirical_variance", d.empirical_variance)
                    .with("predicted_variance", d.predicted_variance)
                    .with("ratio", d.ratio)
                    .with("ks_statistic", d.ks_statistic),
            );
        }
    }
    Ok(rows)
}

/// Smallest `x` with `F(x) >= 1/2`.
fn population_median(family: &Family, theta: f64) -> Result<f64> {
    let cdf = |x: f64| family.cdf(x, theta).context("family has no CDF");
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    while cdf(lo)? >= 0.5 {
        lo *= 2.0;
        if lo < -1e300 {
            bail!("median search diverged");
        }
    }
    while cdf(hi)? < 0.5 {
        hi *= 2.0;
        if hi > 1e300 {
            bail!("median search diverged");
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if cdf(mid)? >= 0.5 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

struct Moments {
    mean: f64,
    variance: f64,
    mse: f64,
}

fn moments(values: &[f64], target: f64) -> Moments {
    let n = values.len() as f64;
    let mean = values.iter().copied().collect::<CompensatedSum>().value() / n;
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).collect::<CompensatedSum>().value();
    let se = values.iter().map(|v| (v - target) * (v - target)).collect::<CompensatedSum>().value();
    Moments {
        mean,
        variance: if values.len() > 1 { ss / (n - 1.0) } else { 0.0 },
        mse: se / n,
    }
}

/// Even median on n draws, its extension to n + 1 draws, and the standard
/// odd median of the same n + 1 draws. Exact variances where the support is
/// finite; Monte Carlo moments and MSE about the population median always.
fn median_study(cfg: &ExperimentConfig, parallelism: Parallelism) -> Result<Vec<ResultRow>> {
    let family = cfg.family()?;
    let mut rows = Vec::new();
    for &theta in &cfg.thetas {
        let target = population_median(&family, theta)?;
        for &n in &cfg.n {
            let even = Estimator::median(n);
            let extended = even.extend();
            let odd = Estimator::median(n + 1);
            let idx = rows.len();
            let row = base_row(cfg, idx, Some(theta), "median", n, n);
            let seed = row.seed;
            let triples = map_indexed(cfg.replications, parallelism, |r| {
                let mut rng = rng_for(seed, &[r as u64]);
                let draws = family.sample(theta, n + 1, &mut rng);
                (even.eval(&draws[..n]), extended.eval(&draws), odd.eval(&draws))
            });
            let pick = |f: fn(&(f64, f64, f64)) -> f64| moments(&triples.iter().map(f).collect::<Vec<_>>(), target);
            let (me, mx, mo) = (pick(|t| t.0), pick(|t| t.1), pick(|t| t.2));
            let exact = match family.finite_dist(theta) {
                Some(dist) => Some(exact_variances(&dist?, &even, &extended, &odd)?),
                None => None,
            };
            let [ve, vx, vo] = match exact {
                Some(v) => v.map(Cell::Fraction),
                None => [Cell::Missing, Cell::Missing, Cell::Missing],
            };
            rows.push(
                row.with("population_median", target)
                    .with("even_mean", me.mean)
                    .with("even_variance", me.variance)
                    .with("even_mse", me.mse)
                    .with("extended_mean", mx.mean)
                    .with("extended_variance", mx.variance)
                    .with("extended_mse", mx.mse)
                    .with("odd_mean", mo.mean)
                    .with("odd_variance", mo.variance)
                    .with("odd_mse", mo.mse)
                    .with("mse_ratio_extended_to_odd", if mo.mse > 0.0 { mx.mse / mo.mse } else { 1.0 })
                    .with("even_variance_exact", ve)
                    .with("extended_variance_exact", vx)
                    .with("odd_variance_exact", vo),
            );
        }
    }
    Ok(rows)
}

fn exact_variances(
    dist: &FiniteDist,
    even: &Estimator,
    extended: &Estimator,
    odd: &Estimator,
) -> Result<[jkext::Rational; 3]> {
    let var = |e: &Estimator| -> Result<jkext::Rational> { Ok(exact_var(e, dist, e.arity())?) };
    Ok([var(even)?, var(extended)?, var(odd)?])
}

fn conjecture16(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let ms: Vec<usize> = if cfg.n.is_empty() {
        DEFAULT_CONJECTURE_RANGE.collect()
    } else {
        cfg.n.clone()
    };
    let mut rows = Vec::new();
    for m in ms {
        let c = conjecture16_check(m)?;
        let idx = rows.len();
        let w = c.weights.weights();
        rows.push(
            base_row(cfg, idx, None, "median", m, 2 * m + 1)
                .with("weight_left", w[m - 1].clone())
                .with("weight_center", w[m].clone())
                .with("weight_right", w[m + 1].clone())
                .with("expected_side", c.expected[m - 1].clone())
                .with("expected_center", c.expected[m].clone())
                .with("matches", c.matches),
        );
    }
    Ok(rows)
}
