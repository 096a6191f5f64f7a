//! Double-exponential quadrature on finite, half-infinite and infinite
//! ranges.
//!
//! Finite ranges use the tanh-sinh map, `[a, inf)` the exp-sinh map and the
//! whole line the sinh-sinh map. The step is halved until two successive
//! levels agree to the tolerance; the last difference is reported as the
//! error estimate.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { abs: 1e-10, rel: 1e-10 }
    }
}

impl Tolerance {
    fn accepts(&self, err: f64, value: f64) -> bool {
        err <= self.abs.max(self.rel * value.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

impl Integral {
    fn zero() -> Self {
        Integral {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        }
    }

    fn add(self, other: Integral) -> Integral {
        Integral {
            value: self.value + other.value,
            error: self.error + other.error,
            evaluations: self.evaluations + other.evaluations,
        }
    }
}

const MIN_LEVEL: u32 = 3;
const MAX_LEVEL: u32 = 10;

#[derive(Debug, Clone, Copy)]
enum Map {
    Finite { a: f64, b: f64 },
    Upper { a: f64 },
    Lower { b: f64 },
    Line,
}

impl Map {
    fn t_max(self) -> f64 {
        match self {
            Map::Finite { .. } => 3.5,
            _ => 4.0,
        }
    }

    /// Node and weight at `t`, or `None` when the node collapses onto an
    /// endpoint in floating point.
    #[inline]
    fn node(self, t: f64) -> Option<(f64, f64)> {
        let u = FRAC_PI_2 * t.sinh();
        let du = FRAC_PI_2 * t.cosh();
        match self {
            Map::Finite { a, b } => {
                let half = 0.5 * (b - a);
                // distance from the nearer endpoint, computed without cancellation
                let e = (-2.0 * u.abs()).exp();
                let gap = half * 2.0 * e / (1.0 + e);
                let x = if u >= 0.0 { b - gap } else { a + gap };
                if gap == 0.0 || x <= a || x >= b {
                    return None;
                }
                let sech = 2.0 / (u.exp() + (-u).exp());
                Some((x, half * du * sech * sech))
            }
            Map::Upper { a } => {
                let e = u.exp();
                let x = a + e;
                if x == a || !x.is_finite() {
                    return None;
                }
                Some((x, e * du))
            }
            Map::Lower { b } => {
                let e = u.exp();
                let x = b - e;
                if x == b || !x.is_finite() {
                    return None;
                }
                Some((x, e * du))
            }
            Map::Line => {
                let x = u.sinh();
                if !x.is_finite() {
                    return None;
                }
                Some((x, u.cosh() * du))
            }
        }
    }
}

fn integrate_map<F>(f: &mut F, map: Map, tol: Tolerance) -> Result<Integral>
where
    F: FnMut(f64) -> Result<f64>,
{
    let t_max = map.t_max();
    let mut evaluations = 0usize;
    let mut eval = |t: f64, evaluations: &mut usize| -> Result<f64> {
        match map.node(t) {
            None => Ok(0.0),
            Some((x, w)) => {
                *evaluations += 1;
                let fx = f(x)?;
                let term = w * fx;
                if term.is_finite() {
                    Ok(term)
                } else if fx == 0.0 || w == 0.0 {
                    Ok(0.0)
                } else {
                    Err(Error::Quadrature {
                        value: f64::NAN,
                        error: f64::INFINITY,
                    })
                }
            }
        }
    };

    // level 0: step 1 on [-t_max, t_max]
    let mut h = 1.0;
    let mut sum = eval(0.0, &mut evaluations)?;
    let mut k = 1.0;
    while k <= t_max {
        sum += eval(k, &mut evaluations)? + eval(-k, &mut evaluations)?;
        k += 1.0;
    }
    let mut estimate = h * sum;
    let mut error = f64::INFINITY;
    for level in 1..=MAX_LEVEL {
        h *= 0.5;
        let mut fresh = 0.0;
        let mut j = 1.0;
        while j * h <= t_max {
            let t = j * h;
            fresh += eval(t, &mut evaluations)? + eval(-t, &mut evaluations)?;
            j += 2.0;
        }
        sum += fresh;
        let next = h * sum;
        error = (next - estimate).abs();
        estimate = next;
        if level >= MIN_LEVEL && tol.accepts(error, estimate) {
            return Ok(Integral {
                value: estimate,
                error,
                evaluations,
            });
        }
    }
    Err(Error::Quadrature {
        value: estimate,
        error,
    })
}

/// Integrates `f` over `[a, b]`, either end possibly infinite, splitting at
/// the interior `breaks`.
pub fn integrate<F>(mut f: F, a: f64, b: f64, breaks: &[f64], tol: Tolerance) -> Result<Integral>
where
    F: FnMut(f64) -> Result<f64>,
{
    if a.is_nan() || b.is_nan() {
        return Err(Error::InvalidArgument("NaN integration limit".into()));
    }
    if a == b {
        return Ok(Integral::zero());
    }
    if a > b {
        let r = integrate(f, b, a, breaks, tol)?;
        return Ok(Integral { value: -r.value, ..r });
    }
    let mut points: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|x| x.is_finite() && *x > a && *x < b)
        .collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    let mut edges = Vec::with_capacity(points.len() + 2);
    edges.push(a);
    edges.extend(points);
    edges.push(b);

    let pieces = edges.len() - 1;
    // each piece gets its share of the absolute tolerance
    let piece_tol = Tolerance {
        abs: tol.abs / pieces as f64,
        rel: tol.rel,
    };
    let mut total = Integral::zero();
    for w in edges.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let map = match (lo.is_finite(), hi.is_finite()) {
            (true, true) => Map::Finite { a: lo, b: hi },
            (true, false) => Map::Upper { a: lo },
            (false, true) => Map::Lower { b: hi },
            (false, false) => Map::Line,
        };
        total = total.add(integrate_map(&mut f, map, piece_tol)?);
    }
    Ok(total)
}

/// Central difference with step `1e-5 (1 + |x|)` and one Richardson step.
/// The step shrinks to stay inside `(lo, hi)`.
pub fn derivative<F>(mut f: F, x: f64, lo: f64, hi: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut h = 1e-5 * (1.0 + x.abs());
    let room = (x - lo).min(hi - x);
    if room.is_finite() && 2.0 * h >= room {
        h = 0.25 * room;
    }
    if h <= 0.0 {
        return Err(Error::InvalidArgument(format!("{x} lies on the domain boundary")));
    }
    let d1 = (f(x + h)? - f(x - h)?) / (2.0 * h);
    let h2 = 0.5 * h;
    let d2 = (f(x + h2)? - f(x - h2)?) / (2.0 * h2);
    Ok((4.0 * d2 - d1) / 3.0)
}
