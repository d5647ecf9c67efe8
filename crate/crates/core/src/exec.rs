//! Trial-level parallelism with a sequential fallback.
//!
//! Work is always indexed; results come back in index order whatever the
//! worker count, so reductions over them are deterministic.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// `workers == 0` uses every available core.
    Parallel {
        workers: usize,
    },
    #[default]
    Auto,
}

impl Execution {
    pub fn workers(n: usize) -> Self {
        if n == 1 {
            Execution::Sequential
        } else {
            Execution::Parallel { workers: n }
        }
    }
}

/// `(0..n).map(f)` collected in index order.
pub fn map_indexed<T, F>(n: u64, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    match exec {
        Execution::Sequential => (0..n).map(f).collect(),
        #[cfg(feature = "parallel")]
        Execution::Auto => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        #[cfg(feature = "parallel")]
        Execution::Parallel { workers } => {
            use rayon::prelude::*;
            match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
                Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
                Err(e) => {
                    log::warn!("thread pool unavailable ({e}); running sequentially");
                    (0..n).map(f).collect()
                }
            }
        }
        #[cfg(not(feature = "parallel"))]
        _ => (0..n).map(f).collect(),
    }
}
