//! Order-preserving fan-out of independent jobs (seeds, episodes).
//!
//! With the `parallel` feature jobs run on the rayon pool; without it they
//! run one after another on the calling thread. Results come back in input
//! order either way, so callers see identical output.

/// Applies `f` to every item, in parallel when the feature is on.
#[cfg(feature = "parallel")]
pub fn fan_out<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn fan_out<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    fan_out_sequential(items, f)
}

/// Always sequential; the reference path for benchmarks and tests.
pub fn fan_out_sequential<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    F: Fn(T) -> R,
{
    items.into_iter().map(f).collect()
}

/// True when [`fan_out`] uses the thread pool.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
