//! Extension weights against brute-force recovery from numeric jackknife
//! evaluations, and the closed-form median patterns.

use jkext::lstat::{chain_weights, conjecture16_check, extend_weights, mean_weights, median_weights, LWeights};
use jkext::scalar::{rational, Rational};
use jkext::seeding::rng_for;
use jkext::Estimator;
use num_bigint::BigInt;
use num_traits::{One, Zero};
use rand::Rng;

/// Best rational approximation with denominator at most `max_den`.
fn reconstruct(x: f64, max_den: i64) -> Rational {
    let (mut h0, mut h1) = (0i64, 1i64);
    let (mut k0, mut k1) = (1i64, 0i64);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        let ai = a as i64;
        let (h2, k2) = (ai * h1 + h0, ai * k1 + k0);
        if k2 > max_den {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = r - a;
        if frac.abs() < 1e-9 {
            break;
        }
        r = 1.0 / frac;
    }
    Rational::new(BigInt::from(h1), BigInt::from(k1))
}

/// Weights of the extended L-statistic read off by unit perturbations of a
/// strictly increasing integer-spaced sample.
fn recover(est: &Estimator, seed: u64) -> Vec<Rational> {
    let len = est.arity() + 1;
    let ext = est.extend();
    let mut rng = rng_for(seed, &[len as u64]);
    let mut base = Vec::with_capacity(len);
    let mut x = rng.random_range(-50.0f64..50.0).round();
    for _ in 0..len {
        x += (10 + rng.random_range(0..20)) as f64;
        base.push(x);
    }
    let v0 = ext.eval(&base);
    (0..len)
        .map(|p| {
            let mut bumped = base.clone();
            bumped[p] += 1.0;
            reconstruct(ext.eval(&bumped) - v0, 100_000)
        })
        .collect()
}

fn battery(n: usize) -> Vec<LWeights> {
    let mut out = vec![median_weights(n).unwrap(), mean_weights(n).unwrap()];
    let mut minimum = vec![Rational::zero(); n];
    minimum[0] = Rational::one();
    out.push(LWeights::new(minimum).unwrap());
    if n >= 2 {
        let mut mid = vec![Rational::zero(); n];
        mid[0] = rational(1, 2);
        mid[n - 1] = rational(1, 2);
        out.push(LWeights::new(mid).unwrap());
    }
    if n >= 3 {
        let mut skew = vec![Rational::zero(); n];
        skew[0] = rational(1, 6);
        skew[1] = rational(1, 3);
        skew[n - 1] = rational(1, 2);
        out.push(LWeights::new(skew).unwrap());
    }
    out
}

#[test]
fn recurrence_matches_brute_force_recovery() {
    for n in 1..=9 {
        for lw in battery(n) {
            let expected = extend_weights(&lw);
            let est = Estimator::lstat(lw.clone());
            for seed in [1u64, 2, 3] {
                let got = recover(&est, seed);
                assert_eq!(got, expected.weights(), "n={n} start={:?} seed={seed}", lw.to_fractions());
            }
        }
    }
}

#[test]
fn odd_median_extension_is_the_middle_pair_for_all_m() {
    for m in 0..=100usize {
        let w = extend_weights(&median_weights(2 * m + 1).unwrap());
        for (i, wi) in w.weights().iter().enumerate() {
            let p = i + 1;
            let want = if p == m + 1 || p == m + 2 { rational(1, 2) } else { Rational::zero() };
            assert_eq!(*wi, want, "m={m} p={p}");
        }
    }
}

#[test]
fn odd_median_extension_holds_for_interior_insertions() {
    for m in 0..=5usize {
        let n = 2 * m + 1;
        let ext = Estimator::median(n).extend();
        let base: Vec<f64> = (0..n).map(|i| (3 * i) as f64).collect();
        for slot in 0..=n {
            // new point placed strictly between existing order statistics
            let new_point = 3.0 * slot as f64 - 1.5;
            let mut xs = base.clone();
            xs.push(new_point);
            let mut sorted = xs.clone();
            sorted.sort_by(f64::total_cmp);
            let want = 0.5 * (sorted[m] + sorted[m + 1]);
            assert_eq!(ext.eval(&xs), want, "m={m} slot={slot}");
        }
    }
}

#[test]
fn even_median_pattern_holds_up_to_two_hundred() {
    for m in 1..=200 {
        let check = conjecture16_check(m).unwrap();
        assert!(check.matches, "m={m}");
    }
}

#[test]
fn even_median_pattern_matches_brute_force_at_fifty() {
    let check = conjecture16_check(50).unwrap();
    let got = recover(&Estimator::median(100), 11);
    assert_eq!(got, check.weights.weights());
}

#[test]
fn chain_goldens_match_brute_force() {
    let from_three = chain_weights(&median_weights(3).unwrap(), 4).unwrap();
    assert_eq!(from_three.to_fractions(), ["0/1", "1/2", "1/2", "0/1"]);
    assert_eq!(recover(&Estimator::median(3), 5), from_three.weights());

    let from_four = chain_weights(&median_weights(4).unwrap(), 6).unwrap();
    assert_eq!(from_four.to_fractions(), ["0/1", "1/5", "3/10", "3/10", "1/5", "0/1"]);
    let once = Estimator::lstat(extend_weights(&median_weights(4).unwrap()));
    assert_eq!(recover(&once, 6), from_four.weights());
}
