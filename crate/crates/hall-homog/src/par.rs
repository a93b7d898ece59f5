//! Task-level parallelism switch.
//!
//! Independent units of work (cell solves for distinct directions, schedule
//! stages, fine/homogenized macro solves) run through [`map_collect`]. With the
//! `parallel` feature (default) the work is dispatched on the rayon pool;
//! without it, or with [`Parallelism::Sequential`], it runs in order on the
//! calling thread. Each closure is internally sequential either way, so the
//! collected results are identical bit for bit.

use serde::{Deserialize, Serialize};

/// How to execute a batch of independent work items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parallelism {
    /// Run items in order on the calling thread.
    Sequential,
    /// Use the rayon thread pool (falls back to sequential when the crate is
    /// built without the `parallel` feature).
    #[default]
    Rayon,
}

/// Map `f` over `items`, preserving order.
pub fn map_collect<T, U, F>(mode: Parallelism, items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    match mode {
        Parallelism::Sequential => items.into_iter().map(f).collect(),
        Parallelism::Rayon => {
            #[cfg(feature = "parallel")]
            {
                use rayon::prelude::*;
                items.into_par_iter().map(f).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                items.into_iter().map(f).collect()
            }
        }
    }
}

/// Run a closure on a rayon pool with `threads` workers (0 = default size).
/// Without the `parallel` feature the closure runs directly.
pub fn with_thread_limit<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        if threads == 0 {
            return f();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_preserved_both_modes() {
        let items: Vec<u64> = (0..257).collect();
        let seq = map_collect(Parallelism::Sequential, items.clone(), |x| x * x + 1);
        let par = map_collect(Parallelism::Rayon, items, |x| x * x + 1);
        assert_eq!(seq, par);
    }
}
