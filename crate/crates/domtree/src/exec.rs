//! Thread-pool executor for the per-example jobs of training and evaluation.

use domtree_core::Executor;
use rayon::prelude::*;
use rayon::ThreadPool;

/// Sequential for one thread, otherwise a dedicated rayon pool. Results
/// come back in index order either way, so the thread count never changes
/// the numbers.
pub enum Exec {
    Sequential,
    Pool(ThreadPool),
}

impl Exec {
    pub fn new(threads: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        if threads <= 1 {
            return Ok(Exec::Sequential);
        }
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
        Ok(Exec::Pool(pool))
    }

    pub fn threads(&self) -> usize {
        match self {
            Exec::Sequential => 1,
            Exec::Pool(pool) => pool.current_num_threads(),
        }
    }
}

impl Executor for Exec {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Exec::Sequential => (0..n).map(f).collect(),
            Exec::Pool(pool) => pool.install(|| (0..n).into_par_iter().map(f).collect()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_keeps_index_order() {
        let exec = Exec::new(3).unwrap();
        assert_eq!(exec.threads(), 3);
        let out = exec.map(100, |i| i * i);
        assert_eq!(out, (0..100).map(|i| i * i).collect::<Vec<_>>());
    }
}
