//! Data-parallel execution of independent work items.
//!
//! With the `parallel` feature (default) the work runs on the current rayon
//! pool; without it the same closure runs sequentially. Results come back in
//! index order either way, and every work item receives only its own index,
//! so outputs are identical under both paths and any thread count.

/// Map `f` over `0..count`, collecting results in index order.
#[cfg(feature = "parallel")]
pub fn run_indexed<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

/// Map `f` over `0..count`, collecting results in index order.
#[cfg(not(feature = "parallel"))]
pub fn run_indexed<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    run_indexed_seq(count, f)
}

/// Sequential reference path, always available. Benches compare this against
/// [`run_indexed`] on identical workloads.
pub fn run_indexed_seq<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    (0..count).map(f).collect()
}
