//! Thread-pool executor and wall clock.

use std::time::Instant;

use adrrec_core::exec::{Clock, Executor};
use rayon::prelude::*;

use crate::error::{AppError, AppResult};

pub const THREADS_ENV: &str = "ADRREC_THREADS";

/// Runs work on a rayon pool; results keep index order, so reductions are unaffected.
pub struct Parallel {
    pool: rayon::ThreadPool,
}

impl Parallel {
    /// `threads == 0` lets rayon choose.
    pub fn new(threads: usize) -> AppResult<Self> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| AppError::Config(format!("thread pool: {e}")))?;
        Ok(Self { pool })
    }

    /// Honors `ADRREC_THREADS` as an upper bound on workers.
    pub fn from_env() -> AppResult<Self> {
        let threads = match std::env::var(THREADS_ENV) {
            Ok(v) => v.trim().parse::<usize>().map_err(|_| AppError::Config(format!("{THREADS_ENV}={v:?} is not a thread count")))?,
            Err(_) => 0,
        };
        Self::new(threads)
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for Parallel {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| (0..n).into_par_iter().map(f).collect())
    }
}

pub struct WallClock(Instant);

impl WallClock {
    pub fn start() -> Self {
        Self(Instant::now())
    }
}

impl Clock for WallClock {
    fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use adrrec_core::exec::Sequential;

    #[test]
    fn order_matches_sequential() {
        let p = Parallel::new(3).unwrap();
        let f = |i: usize| (i * 37 % 11) as f64 / 3.0;
        assert_eq!(p.map(100, f), Sequential.map(100, f));
    }
}
