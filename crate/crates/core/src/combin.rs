//! Binomial coefficients and lexicographic subset enumeration.

/// `C(n, k)`, or `None` on u128 overflow.
pub fn binomial(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for j in 0..k {
        // acc * (n - j) is divisible by (j + 1) at every step.
        acc = acc.checked_mul(u128::from(n - j))? / u128::from(j + 1);
    }
    Some(acc)
}

pub fn binomial_f64(n: u64, k: u64) -> f64 {
    match binomial(n, k) {
        Some(c) => c as f64,
        None => (lgamma(n + 1) - lgamma(k + 1) - lgamma(n - k + 1)).exp(),
    }
}

fn lgamma(n: u64) -> f64 {
    statrs::function::gamma::ln_gamma(n as f64)
}

/// The `rank`-th `m`-subset of `0..n` in lexicographic order.
pub fn unrank(n: usize, m: usize, mut rank: u128) -> Vec<usize> {
    let mut out = Vec::with_capacity(m);
    let mut next = 0usize;
    for pos in 0..m {
        let mut c = next;
        loop {
            let rest = binomial((n - c - 1) as u64, (m - pos - 1) as u64).unwrap_or(u128::MAX);
            if rank < rest {
                break;
            }
            rank -= rest;
            c += 1;
        }
        out.push(c);
        next = c + 1;
    }
    out
}

/// Advances `idx` to the next `m`-subset of `0..n`; false when exhausted.
pub fn next_subset(idx: &mut [usize], n: usize) -> bool {
    let m = idx.len();
    let mut i = m;
    while i > 0 {
        i -= 1;
        if idx[i] < n - m + i {
            idx[i] += 1;
            for j in i + 1..m {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Calls `f` on every `m`-subset of `0..n` in lexicographic order.
pub fn for_each_subset(n: usize, m: usize, mut f: impl FnMut(&[usize])) {
    if m > n {
        return;
    }
    let mut idx: Vec<usize> = (0..m).collect();
    loop {
        f(&idx);
        if !next_subset(&mut idx, n) {
            break;
        }
    }
}
