//! Data-parallel map with a sequential fallback.
//!
//! With the `parallel` feature (on by default) [`map_range`] fans work out
//! over the rayon pool; without it both entry points run sequentially.
//! Results are collected in index order either way, so output never depends
//! on thread scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub fn map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Send + Sync,
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

pub fn map_range_sequential<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}
