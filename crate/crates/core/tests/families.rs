//! Distribution catalog: normalization, scores, Fisher information, bounds,
//! efficiency, samplers, exponential-family construction and MLE.

use jkext::error::{Error, Side};
use jkext::families::*;
use jkext::hoeffding::{Method, MonteCarlo};
use jkext::kernels::{make_median_kernel, make_variance_kernel, mean_kernel, StatFn};
use jkext::seeding::rng_for;
use jkext::Sample;

fn all() -> Vec<Family> {
    FAMILY_NAMES.iter().map(|n| Family::by_name(n).unwrap()).collect()
}

fn canonical(name: &str) -> StatFn {
    match name {
        "normal-var" => StatFn::Square,
        _ => StatFn::Identity,
    }
}

#[test]
fn registry_validates_names_and_parameters() {
    assert!(matches!(Family::by_name("gamma"), Err(Error::UnknownFamily(_))));
    assert!(bernoulli().check_theta(1.0).is_err());
    assert!(poisson().check_theta(-1.0).is_err());
    assert!(matches!(
        fisher_info(&exp_rate(), 0.0),
        Err(Error::ParameterOutOfDomain { .. })
    ));
}

#[test]
fn densities_normalize_and_scores_center() {
    for f in all() {
        for &t in f.grid() {
            let mass = f.expect(t, |_| Ok(1.0), &[]).unwrap().value;
            assert!((mass - 1.0).abs() <= 1e-8, "{} {t}: mass {mass}", f.name());
            let centered = f.expect(t, |x| Ok(f.score(x, t)), &[]).unwrap().value;
            assert!(centered.abs() <= 1e-6, "{} {t}: E J = {centered}", f.name());
        }
    }
}

#[test]
fn fisher_information_matches_closed_forms() {
    for f in all() {
        for &t in f.grid() {
            let fi = fisher_info(&f, t).unwrap();
            let closed = match f.name() {
                "normal-mean" | "laplace" => 1.0,
                "normal-var" => 1.0 / (2.0 * t * t),
                "poisson" => 1.0 / t,
                "bernoulli" => 1.0 / (t * (1.0 - t)),
                "exp-rate" => 1.0 / (t * t),
                "cauchy" => 0.5,
                other => panic!("{other}"),
            };
            assert!((fi.value - closed).abs() <= 1e-6, "{} {t}: {} vs {closed}", f.name(), fi.value);
            assert!(fi.discrepancy.unwrap() <= 1e-6);
        }
    }
}

#[test]
fn cramer_rao_examples() {
    let b = cr_bound(&normal_mean(), &StatFn::Identity, 10, 0.3).unwrap();
    assert!((b - 0.1).abs() < 1e-9);
    let b = cr_bound(&poisson(), &StatFn::Identity, 1, 2.0).unwrap();
    assert!((b - 2.0).abs() < 1e-8);
    for f in all() {
        let t = f.grid()[2];
        let h = if f.name() == "cauchy" { StatFn::Indicator { threshold: 0.5 } } else { canonical(f.name()) };
        let one = cr_bound(&f, &h, 7, t).unwrap();
        let two = cr_bound(&f, &h, 14, t).unwrap();
        assert!((one - 2.0 * two).abs() <= 1e-12 * one.abs().max(1.0));
    }
}

#[test]
fn single_statistic_bound_holds_on_the_whole_battery() {
    for f in all() {
        for &t in f.grid() {
            for h in StatFn::battery() {
                let r = lemma3_bound(&f, &h, t).unwrap();
                assert!(r.holds && r.margin >= 0.0, "{} {t} {}: margin {}", f.name(), h.label(), r.margin);
                assert_eq!(r.fisher - r.bound, r.gap);
            }
        }
    }
}

#[test]
fn single_statistic_bound_examples() {
    let r = lemma3_bound(&normal_mean(), &StatFn::Identity, 0.7).unwrap();
    assert!((r.bound - 1.0).abs() < 1e-8 && r.gap.abs() < 1e-8);
    let r = lemma3_bound(&normal_mean(), &StatFn::Cube, 0.0).unwrap();
    assert!((r.bound - 0.6).abs() < 1e-8, "{}", r.bound);
    assert!((r.sigma2 - 15.0).abs() < 1e-8);
    for &t in bernoulli().grid() {
        let r = lemma3_bound(&bernoulli(), &StatFn::Identity, t).unwrap();
        assert!((r.bound - 1.0 / (t * (1.0 - t))).abs() < 1e-6 * r.fisher);
    }
    // a constant statistic carries no information and is rejected
    let constant = StatFn::custom("one", |_| 1.0);
    assert!(matches!(lemma3_bound(&normal_mean(), &constant, 0.0), Err(Error::Degenerate(_))));
}

#[test]
fn projection_residual_is_the_bound_gap() {
    for f in all() {
        for &t in f.grid() {
            for h in StatFn::battery() {
                let res = projection_residual(&f, &h, t).unwrap();
                let l = lemma3_bound(&f, &h, t).unwrap();
                assert!((res - l.gap).abs() <= 1e-8 * l.fisher.max(1.0), "{} {t} {}: {res} vs {}", f.name(), h.label(), l.gap);
            }
        }
    }
}

#[test]
fn projection_residual_vanishes_only_for_canonical_statistics() {
    for name in ["normal-mean", "normal-var", "poisson", "bernoulli", "exp-rate"] {
        let f = Family::by_name(name).unwrap();
        for &t in f.grid() {
            let res = projection_residual(&f, &canonical(name), t).unwrap();
            assert!(res.abs() <= 1e-8, "{name} {t}: {res}");
        }
    }
    // Cauchy: the identity has no variance, so nothing of the score is
    // explained and the residual is the full information.
    let res = projection_residual(&cauchy(), &StatFn::Identity, 0.0).unwrap();
    assert!(res > 0.01);
    assert!((res - 0.5).abs() < 1e-8);
}

#[test]
fn efficiency_of_mean_kernels_in_exponential_families() {
    for (f, t) in [(normal_mean(), 0.0), (poisson(), 2.0), (bernoulli(), 0.3)] {
        let e = aseff(&f, &mean_kernel(), t, &Method::Numeric).unwrap();
        assert!((e.aseff - 1.0).abs() <= 1e-6, "{}: {}", f.name(), e.aseff);
    }
    for &t in poisson().grid() {
        let e = aseff(&poisson(), &mean_kernel(), t, &Method::Numeric).unwrap();
        assert!((e.v1 - t).abs() < 1e-8);
    }
    let e = aseff(&bernoulli(), &mean_kernel(), 0.25, &Method::Exact).unwrap();
    assert!((e.aseff - 1.0).abs() <= 1e-6);
}

#[test]
fn variance_kernel_is_efficient_for_the_normal_variance_family() {
    for &t in &[0.5, 1.0, 2.0] {
        let e = aseff(&normal_var(), &make_variance_kernel(), t, &Method::Numeric).unwrap();
        assert!((e.aseff - 1.0).abs() <= 1e-6, "{t}: {}", e.aseff);
        assert!((e.v1 - t * t / 2.0).abs() < 1e-9);
        assert!(e.aseff > e.reference);
    }
    // independent check of v_1 by nested simulation
    let mc = MonteCarlo::new(60_000, 100, 5);
    let e = aseff(&normal_var(), &make_variance_kernel(), 1.0, &Method::MonteCarlo(mc)).unwrap();
    let se = e.v1_std_err.unwrap();
    assert!((e.v1 - 0.5).abs() <= 4.0 * se, "{} ± {se}", e.v1);
}

#[test]
fn cauchy_median_of_three_is_inefficient() {
    let golden = 0.291311474267;
    let e = aseff(&cauchy(), &make_median_kernel(3).unwrap(), 0.0, &Method::Numeric).unwrap();
    assert!((e.aseff - golden).abs() < 1e-9, "{}", e.aseff);
    assert!(1.0 - e.aseff > 0.05);
    let mc = MonteCarlo::new(60_000, 200, 17);
    let m = aseff(&cauchy(), &make_median_kernel(3).unwrap(), 0.0, &Method::MonteCarlo(mc)).unwrap();
    assert!((m.aseff - golden).abs() / golden < 0.03, "{}", m.aseff);
}

#[test]
fn samplers_match_their_distributions() {
    for f in all() {
        for (i, &t) in f.grid().iter().enumerate() {
            let mut rng = rng_for(31, &[i as u64]);
            let draws = f.sample(t, 100_000, &mut rng);
            let d = ks_distance(&f, t, &draws).unwrap();
            assert!(d < 0.01, "{} {t}: KS {d}", f.name());
        }
    }
    let mut rng = rng_for(3, &[]);
    let big = poisson().sample(50.0, 100_000, &mut rng);
    assert!(ks_distance(&poisson(), 50.0, &big).unwrap() < 0.01);
}

#[test]
fn samplers_are_seed_deterministic() {
    for f in all() {
        let a = f.sample(f.grid()[1], 50, &mut rng_for(8, &[1]));
        let b = f.sample(f.grid()[1], 50, &mut rng_for(8, &[1]));
        assert_eq!(a, b);
    }
}

#[test]
fn built_normal_matches_the_catalog_density() {
    let ef = build_exponential_family(ExponentialFamilySpec::normal_mean()).unwrap();
    let reference = normal_mean();
    for i in 0..100 {
        let x = -6.0 + 0.12 * i as f64;
        for &t in &[-1.0, 0.0, 2.5] {
            let a = ef.family().density(x, t);
            let b = reference.density(x, t);
            assert!((a - b).abs() <= 1e-12, "{x} {t}");
            assert!((ef.family().score(x, t) - reference.score(x, t)).abs() <= 1e-12);
        }
    }
    let draws = ef.family().sample(0.5, 100_000, &mut rng_for(4, &[]));
    assert!(ks_distance(&reference, 0.5, &draws).unwrap() < 0.01);
}

#[test]
fn built_poisson_matches_the_catalog_mass_function() {
    let ef = build_exponential_family(ExponentialFamilySpec::poisson()).unwrap();
    for x in 0..=50 {
        for &t in &[0.5, 3.0, 20.0] {
            let a = ef.family().density(x as f64, t);
            let b = poisson().density(x as f64, t);
            assert!((a - b).abs() <= 1e-12 * b.max(1e-300) + 1e-300, "{x} {t}");
        }
    }
    assert_eq!(ef.family().density(2.5, 1.0), 0.0);
    let draws = ef.family().sample(4.0, 100_000, &mut rng_for(5, &[]));
    assert!(ks_distance(&poisson(), 4.0, &draws).unwrap() < 0.01);
}

#[test]
fn built_exponential_rate_by_direct_substitution() {
    let spec = ExponentialFamilySpec::new(
        "exp-rate-identity",
        (0.0, f64::INFINITY),
        Support::HalfLine { lower: 0.0 },
        |t| -t,
        f64::ln,
        |_| 0.0,
        StatFn::Identity,
        vec![0.5, 1.0, 2.0],
    );
    let ef = build_exponential_family(spec).unwrap();
    for &t in &[0.5, 1.0, 3.0] {
        for &x in &[0.0, 0.3, 2.0, 10.0] {
            let a = ef.family().density(x, t);
            let b = exp_rate().density(x, t);
            assert!((a - b).abs() <= 1e-12 * b.max(1.0));
        }
        let fi = fisher_info(ef.family(), t).unwrap().value;
        assert!((fi - 1.0 / (t * t)).abs() < 1e-8);
    }
    let draws = ef.family().sample(2.0, 100_000, &mut rng_for(6, &[]));
    assert!(ks_distance(&exp_rate(), 2.0, &draws).unwrap() < 0.01);
}

#[test]
fn builder_rejects_unnormalized_specs() {
    let spec = ExponentialFamilySpec::new(
        "bad",
        (f64::NEG_INFINITY, f64::INFINITY),
        Support::Line,
        |t| t,
        |t| -0.5 * t * t,
        |x| -0.5 * x * x,
        StatFn::Identity,
        vec![0.0, 1.0],
    );
    assert!(matches!(build_exponential_family(spec), Err(Error::Normalization { .. })));
}

#[test]
fn builder_rejects_non_monotone_mean_maps() {
    // N(theta^2, 1): the mean map is not monotone across zero
    let log_norm = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let spec = ExponentialFamilySpec::new(
        "folded",
        (f64::NEG_INFINITY, f64::INFINITY),
        Support::Line,
        |t| t * t,
        move |t| -0.5 * t.powi(4) - log_norm,
        |x| -0.5 * x * x,
        StatFn::Identity,
        vec![-1.0, 0.0, 1.0],
    );
    assert!(matches!(build_exponential_family(spec), Err(Error::NotMonotone)));
}

fn sample(xs: &[f64]) -> Sample {
    Sample::new(xs.to_vec()).unwrap()
}

#[test]
fn maximum_likelihood_examples() {
    let p = build_exponential_family(ExponentialFamilySpec::poisson()).unwrap();
    let t = mle_solve(&p, &sample(&[3.0, 4.0, 2.0, 5.0, 2.0])).unwrap();
    assert!((t - 3.2).abs() <= 1e-9, "{t}");

    let e = build_exponential_family(ExponentialFamilySpec::exp_rate()).unwrap();
    let t = mle_solve(&e, &sample(&[1.0, 3.0, 2.5, 1.5])).unwrap();
    assert!((t - 0.5).abs() <= 1e-10, "{t}");

    let b = build_exponential_family(ExponentialFamilySpec::bernoulli()).unwrap();
    let t = mle_solve(&b, &sample(&[0.0, 1.0, 0.0, 0.0])).unwrap();
    assert!((t - 0.25).abs() <= 1e-9, "{t}");

    let n = build_exponential_family(ExponentialFamilySpec::normal_mean()).unwrap();
    let t = mle_solve(&n, &sample(&[-7.0, -3.0])).unwrap();
    assert!((t + 5.0).abs() <= 1e-9);
}

#[test]
fn maximum_likelihood_targets_outside_the_mean_range_name_the_side() {
    let b = build_exponential_family(ExponentialFamilySpec::bernoulli()).unwrap();
    match mle_solve(&b, &sample(&[2.0, 2.0])) {
        Err(Error::OutOfRange { side: Side::Above, .. }) => {}
        other => panic!("{other:?}"),
    }
    match mle_solve(&b, &sample(&[-1.0, 0.0])) {
        Err(Error::OutOfRange { side: Side::Below, .. }) => {}
        other => panic!("{other:?}"),
    }
    let e = build_exponential_family(ExponentialFamilySpec::exp_rate()).unwrap();
    // mean of h = -x must be negative
    match mle_solve(&e, &sample(&[-1.0, -2.0])) {
        Err(Error::OutOfRange { side: Side::Above, .. }) => {}
        other => panic!("{other:?}"),
    }
}
