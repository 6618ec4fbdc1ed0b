//! Thin data-parallel helpers.
//!
//! With the `parallel` feature these dispatch to rayon's global pool; without
//! it they run sequentially. Results are always collected in input order, and
//! callers that reduce floating point values do so over fixed-size chunks so
//! that output does not depend on the number of worker threads.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Number of items per reduction chunk. Independent of thread count.
pub const CHUNK: usize = 2048;

#[cfg(feature = "parallel")]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    F: Fn(usize) -> R,
{
    (0..n).map(f).collect()
}

/// Fallible map; the first error in input order is returned.
pub fn try_map<T, R, E, F>(items: &[T], f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(&T) -> Result<R, E> + Sync + Send,
{
    map(items, f).into_iter().collect()
}

/// Applies `f` to consecutive `CHUNK`-sized row blocks `[start, end)` of a
/// range of length `n` and returns the per-chunk results in order.
pub fn map_chunks<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize, usize) -> R + Sync + Send,
{
    let n_chunks = n.div_ceil(CHUNK);
    map_range(n_chunks, |i| {
        let start = i * CHUNK;
        f(start, (start + CHUNK).min(n))
    })
}

/// Whether the crate was built with rayon support.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
