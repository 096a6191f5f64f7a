//! Work partitioning with a sequential fallback.
//!
//! Every parallel entry point in the crate splits its work into chunks whose
//! boundaries depend only on the problem size, never on the worker count, and
//! reduces chunk results in chunk order. Results are therefore bit-identical
//! for any [`Parallelism`] setting.

/// Subsets, states or replications handled per chunk.
pub const CHUNK: usize = 1 << 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallelism {
    Sequential,
    /// `Threads(0)` uses the global rayon pool.
    Threads(usize),
}

impl Default for Parallelism {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Parallelism::Threads(0)
        } else {
            Parallelism::Sequential
        }
    }
}

impl Parallelism {
    /// Maps a `--workers` count: 1 is sequential, 0 means "all cores".
    pub fn from_workers(workers: usize) -> Self {
        if workers == 1 {
            Parallelism::Sequential
        } else {
            Parallelism::Threads(workers)
        }
    }
}

/// Evaluates `f(0..count)` and returns the results in index order.
pub fn map_indexed<T, F>(count: usize, par: Parallelism, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match par {
        Parallelism::Sequential => (0..count).map(f).collect(),
        Parallelism::Threads(n) => par_map(count, n, f),
    }
}

#[cfg(feature = "parallel")]
fn par_map<T, F>(count: usize, threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    if count <= 1 {
        return (0..count).map(f).collect();
    }
    if threads == 0 {
        return (0..count).into_par_iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| (0..count).into_par_iter().map(&f).collect()),
        Err(_) => (0..count).map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, F>(count: usize, _threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..count).map(f).collect()
}

/// Number of fixed-size chunks covering `total` items.
pub fn chunk_count(total: usize, chunk: usize) -> usize {
    total.div_ceil(chunk)
}

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    /// Folds another partial sum in; callers merge in a fixed order.
    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::new();
        s.add(1.0);
        for _ in 0..10_000 {
            s.add(1e-16);
        }
        s.add(-1.0);
        assert!((s.value() - 1e-12).abs() < 1e-24);
    }

    #[test]
    fn map_indexed_keeps_order_for_any_worker_count() {
        let seq = map_indexed(1000, Parallelism::Sequential, |i| i * i);
        for workers in [0, 2, 3] {
            assert_eq!(map_indexed(1000, Parallelism::Threads(workers), |i| i * i), seq);
        }
    }
}
