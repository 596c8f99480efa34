//! Data-parallel map with a sequential fallback.
//!
//! With the `parallel` feature (default) [`Execution::Parallel`] runs on
//! rayon; without it every execution mode is sequential. Results always come
//! back in input order.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
pub enum Execution {
    Sequential,
    /// `threads: None` uses the global pool.
    #[default]
    Parallel,
    ParallelWith {
        threads: usize,
    },
}

impl Execution {
    pub fn with_threads(threads: Option<usize>) -> Self {
        match threads {
            Some(1) => Execution::Sequential,
            Some(n) if n > 1 => Execution::ParallelWith { threads: n },
            _ => Execution::Parallel,
        }
    }

    /// Order-preserving map.
    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            Execution::Sequential => items.iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
            #[cfg(feature = "parallel")]
            Execution::ParallelWith { threads } => {
                use rayon::prelude::*;
                match rayon::ThreadPoolBuilder::new()
                    .num_threads(*threads)
                    .build()
                {
                    Ok(pool) => pool.install(|| items.par_iter().map(f).collect()),
                    Err(_) => items.par_iter().map(f).collect(),
                }
            }
            #[cfg(not(feature = "parallel"))]
            _ => items.iter().map(f).collect(),
        }
    }

    /// Order-preserving map over `0..n`.
    pub fn map_range<R, F>(&self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        let idx: Vec<usize> = (0..n).collect();
        self.map(&idx, |&i| f(i))
    }
}
