//! Worker pools for the data-parallel stages.
//!
//! With the `parallel` feature a bounded pool is a rayon thread pool sized to
//! the requested worker count. Without it, every mode runs on the calling
//! thread. Output order always follows input order, so results never depend on
//! scheduling.

/// How a batch of independent items is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    /// A dedicated pool with exactly this many threads.
    Threads(usize),
    /// Rayon's global pool.
    Global,
}

impl Exec {
    /// `1` (or `0`) maps to sequential execution.
    pub fn workers(n: usize) -> Self {
        if n <= 1 {
            Exec::Sequential
        } else {
            Exec::Threads(n)
        }
    }

    /// Whether this build can run anything off the calling thread.
    pub const fn parallel_enabled() -> bool {
        cfg!(feature = "parallel")
    }
}

/// Maps `f` over `items`, keeping input order.
pub fn map<T, R, F>(exec: Exec, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        match exec {
            Exec::Sequential => items.iter().map(f).collect(),
            Exec::Global => items.par_iter().map(f).collect(),
            Exec::Threads(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
                Err(e) => {
                    log::warn!("could not build a {n}-thread pool ({e}); running sequentially");
                    items.iter().map(f).collect()
                }
            },
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = exec;
        items.iter().map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved_in_every_mode() {
        let items: Vec<u64> = (0..1000).collect();
        let expected: Vec<u64> = items.iter().map(|x| x * x).collect();
        for exec in [Exec::Sequential, Exec::Threads(4), Exec::Global, Exec::workers(1)] {
            assert_eq!(map(exec, &items, |x| x * x), expected);
        }
    }

    #[test]
    fn worker_count_mapping() {
        assert_eq!(Exec::workers(0), Exec::Sequential);
        assert_eq!(Exec::workers(1), Exec::Sequential);
        assert_eq!(Exec::workers(8), Exec::Threads(8));
    }
}
