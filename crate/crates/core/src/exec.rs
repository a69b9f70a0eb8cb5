//! Indexed map executors.
//!
//! Monte Carlo work is expressed as "compute item `i` for `i in 0..n`"; the
//! executor decides how items are scheduled but must return them in index
//! order, so every downstream reduction runs in a fixed order and results are
//! bit-identical whatever the scheduling.

use alloc::vec::Vec;

pub trait Executor: Sync {
    fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs every item on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}
