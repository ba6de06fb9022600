//! Data-parallel execution helpers.
//!
//! With the default `parallel` feature the independent inner loops (division
//! sampling, candidate split evaluation, simulation experiments) run on
//! rayon; without it they run sequentially. Each work item derives its own
//! seed from its index, and reductions happen in index order afterwards, so
//! results are identical under both modes and any thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, returning results in index order.
#[cfg(feature = "parallel")]
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}
