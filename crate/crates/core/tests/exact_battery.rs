//! Exact enumeration battery: Hoeffding's variance formula, the variance drop,
//! the leave-one-out bound, projection monotonicity, and agreement of exact
//! values with simulation.

use jkext::exact::{
    exact_mean, exact_var, exact_vk, verify_eq5, verify_leave_one_out_bound, verify_variance_drop, FiniteDist,
};
use jkext::kernels::{constant_kernel, make_median_kernel, make_variance_kernel, mean_kernel, product_kernel, Kernel};
use jkext::lstat::{extend_weights, median_weights};
use jkext::scalar::{rational, rational_to_f64, Rational};
use jkext::seeding::rng_for;
use jkext::Estimator;
use num_traits::Zero;
use rand::Rng;

fn dists() -> Vec<(String, FiniteDist)> {
    let mut out = Vec::new();
    for (p, q) in [(1, 3), (1, 2), (2, 3)] {
        out.push((format!("two-point {p}/{q}"), FiniteDist::two_point(rational(p, q)).unwrap()));
    }
    out.push((
        "uniform {0,1,2}".into(),
        FiniteDist::uniform(vec![rational(0, 1), rational(1, 1), rational(2, 1)]).unwrap(),
    ));
    out.push((
        "skewed {-1,0,3}".into(),
        FiniteDist::new(vec![
            (rational(-1, 1), rational(1, 2)),
            (rational(0, 1), rational(1, 3)),
            (rational(3, 1), rational(1, 6)),
        ])
        .unwrap(),
    ));
    out
}

#[test]
fn hoeffding_formula_is_exact_on_the_product_battery() {
    let k = product_kernel();
    for (p, q) in [(1, 3), (1, 2), (2, 3)] {
        let d = FiniteDist::two_point(rational(p, q)).unwrap();
        for n in 3..=5 {
            let c = verify_eq5(&k, &d, n).unwrap();
            assert!(c.equal, "p={p}/{q} n={n}");
            if (p, q, n) == (1, 2, 3) {
                assert_eq!(c.formula_value, rational(5, 48));
            }
        }
    }
}

#[test]
fn hoeffding_formula_is_exact_for_arity_one_and_two() {
    let kernels: Vec<Kernel> = vec![mean_kernel(), make_variance_kernel(), product_kernel()];
    for (name, d) in dists() {
        for k in &kernels {
            for n in 3..=5 {
                let c = verify_eq5(k, &d, n).unwrap();
                assert!(c.equal, "{name} {} n={n}", k.label());
                if k.arity() == 1 {
                    let want = d.variance() / Rational::from_integer((n as i64).into());
                    assert_eq!(c.enumerated_value, want);
                }
            }
        }
    }
}

fn estimators() -> Vec<Estimator> {
    vec![
        Estimator::from_kernel(make_median_kernel(3).unwrap()),
        Estimator::median(2),
        Estimator::median(4),
        Estimator::mean(3),
        Estimator::from_kernel(make_variance_kernel()),
        Estimator::u_statistic(product_kernel(), 3).unwrap(),
        Estimator::lstat(extend_weights(&median_weights(4).unwrap())),
        Estimator::constant(3, 2.5),
    ]
}

#[test]
fn variance_drop_holds_exactly_on_the_battery() {
    let mut configurations = 0;
    for (name, d) in dists() {
        for est in estimators() {
            let r = verify_variance_drop(&est, &d).unwrap();
            assert!(r.holds, "{name} {}: lhs {} rhs {}", est.label(), r.lhs, r.rhs);
            assert!(r.margin() >= Rational::zero());
            configurations += 1;
        }
    }
    assert!(configurations >= 20);

    let fair = FiniteDist::two_point(rational(1, 2)).unwrap();
    let med3 = verify_variance_drop(&Estimator::from_kernel(make_median_kernel(3).unwrap()), &fair).unwrap();
    assert_eq!((med3.lhs, med3.rhs), (rational(5, 8), rational(3, 4)));
    for (_, d) in dists() {
        let mean = verify_variance_drop(&Estimator::mean(4), &d).unwrap();
        assert_eq!(mean.lhs, mean.rhs);
        let c = verify_variance_drop(&Estimator::constant(3, 1.0), &d).unwrap();
        assert!(c.lhs.is_zero() && c.rhs.is_zero());
    }
}

#[test]
fn even_median_variance_drop_goldens() {
    let third = FiniteDist::two_point(rational(1, 3)).unwrap();
    let r = verify_variance_drop(&Estimator::median(4), &third).unwrap();
    assert_eq!((r.lhs.clone(), r.rhs.clone()), (rational(322, 729), rational(344, 729)));
    assert!(r.holds);
}

#[test]
fn leave_one_out_bound_holds_on_the_battery() {
    for (name, d) in dists() {
        for est in estimators() {
            let r = verify_leave_one_out_bound(&est, &d).unwrap();
            assert!(r.holds, "{name} {}", est.label());
        }
    }
}

#[test]
fn projection_variances_are_monotone() {
    let kernels: Vec<Kernel> = vec![
        make_variance_kernel(),
        product_kernel(),
        make_median_kernel(3).unwrap(),
        make_median_kernel(5).unwrap(),
        constant_kernel(3, 1.0),
    ];
    for (name, d) in dists() {
        for k in &kernels {
            let v: Vec<Rational> = (1..=k.arity()).map(|j| exact_vk(k, &d, j).unwrap()).collect();
            assert!(v[0] >= Rational::zero());
            for w in v.windows(2) {
                assert!(w[0] <= w[1], "{name} {}", k.label());
            }
        }
    }
}

fn draw(d: &FiniteDist, rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (v, p) in d.atoms() {
        acc += rational_to_f64(p);
        if u < acc {
            return rational_to_f64(v);
        }
    }
    rational_to_f64(&d.atoms().last().unwrap().0)
}

const BATCHES: usize = 30;

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (mean, xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0))
}

#[test]
fn exact_values_agree_with_simulation_within_four_standard_errors() {
    const R: usize = 100_000;
    let stats: Vec<Estimator> = vec![
        Estimator::from_kernel(make_median_kernel(3).unwrap()),
        Estimator::median(4),
        Estimator::u_statistic(product_kernel(), 4).unwrap(),
        Estimator::from_kernel(make_variance_kernel()),
    ];
    for (di, (name, d)) in dists().into_iter().enumerate() {
        for (si, est) in stats.iter().enumerate() {
            let n = est.arity();
            let mut rng = rng_for(99, &[di as u64, si as u64]);
            let vals: Vec<f64> = (0..R)
                .map(|_| {
                    let xs: Vec<f64> = (0..n).map(|_| draw(&d, &mut rng)).collect();
                    est.eval(&xs)
                })
                .collect();
            let (mean, var) = mean_var(&vals);
            // standard errors from 30 batches; robust where the delta method
            // degenerates (e.g. fair Bernoulli outputs)
            let batches: Vec<(f64, f64)> = vals.chunks(R.div_ceil(BATCHES)).map(mean_var).collect();
            let se = |f: fn(&(f64, f64)) -> f64| {
                let xs: Vec<f64> = batches.iter().map(f).collect();
                (mean_var(&xs).1 / BATCHES as f64).sqrt()
            };
            let (se_mean, se_var) = (se(|b| b.0), se(|b| b.1));

            let em = rational_to_f64(&exact_mean(est, &d, n).unwrap());
            let ev = rational_to_f64(&exact_var(est, &d, n).unwrap());
            assert!((mean - em).abs() <= 4.0 * se_mean + 1e-12, "{name} {} mean", est.label());
            assert!((var - ev).abs() <= 4.0 * se_var + 1e-12, "{name} {} var", est.label());
        }
    }
}
