//! Execution strategy for embarrassingly parallel work.

use alloc::vec::Vec;

/// Maps `f` over `0..n` and returns results in index order. Implementations may
/// run items concurrently; callers reduce the returned vector sequentially, so
/// results never depend on the strategy.
pub trait Executor: Sync {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs everything on the calling thread.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}

/// Elapsed-time source for reports; the core has no clock of its own.
pub trait Clock {
    fn seconds(&self) -> f64;
}

/// Always reports zero.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn seconds(&self) -> f64 {
        0.0
    }
}
