//! Data-parallel helpers. With the `parallel` feature the work is spread by rayon,
//! otherwise it runs in order on the calling thread. Output order never depends on
//! scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// `(0..n).map(f).collect()`, possibly in parallel.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Whether this build spreads work across threads.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
