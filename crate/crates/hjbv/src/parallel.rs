use hjbv_core::Executor;
use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

/// Rayon-backed executor. Items come back in index order, so results do not
/// depend on the thread count.
pub struct Parallel {
    pool: Option<ThreadPool>,
}

impl Parallel {
    /// `None` uses the global rayon pool.
    pub fn new(threads: Option<usize>) -> std::io::Result<Self> {
        let pool = match threads {
            Some(n) => Some(
                ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build()
                    .map_err(std::io::Error::other)?,
            ),
            None => None,
        };
        Ok(Self { pool })
    }
}

impl Executor for Parallel {
    fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        let run = || (0..n).into_par_iter().map(&f).collect();
        match &self.pool {
            Some(pool) => pool.install(run),
            None => run(),
        }
    }
}
