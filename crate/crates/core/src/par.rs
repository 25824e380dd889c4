//! Data-parallel primitives with a sequential fallback.
//!
//! With the `parallel` feature the helpers dispatch to rayon; without it they
//! run in order on the calling thread. Every helper returns results in index
//! order and reductions are performed over fixed chunk boundaries, so the
//! numbers produced do not depend on the number of worker threads.

use std::ops::Range;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length used for row-wise reductions.
pub const ROW_CHUNK: usize = 2048;

/// `(0..n).map(f)` collected in order.
#[cfg(feature = "parallel")]
pub fn map_indices<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indices<R, F>(n: usize, f: F) -> Vec<R>
where
    F: Fn(usize) -> R,
{
    (0..n).map(f).collect()
}

/// Applies `f` to consecutive ranges of length `chunk` covering `0..n`.
/// Partial results come back in range order.
#[cfg(feature = "parallel")]
pub fn map_chunks<A, F>(n: usize, chunk: usize, f: F) -> Vec<A>
where
    A: Send,
    F: Fn(Range<usize>) -> A + Sync + Send,
{
    let chunk = chunk.max(1);
    let count = n.div_ceil(chunk);
    (0..count)
        .into_par_iter()
        .map(|c| f(c * chunk..((c + 1) * chunk).min(n)))
        .collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_chunks<A, F>(n: usize, chunk: usize, f: F) -> Vec<A>
where
    F: Fn(Range<usize>) -> A,
{
    let chunk = chunk.max(1);
    let count = n.div_ceil(chunk);
    (0..count)
        .map(|c| f(c * chunk..((c + 1) * chunk).min(n)))
        .collect()
}

/// Sum of `f(i)` over `0..n`, reduced chunk by chunk in a fixed order.
pub fn sum_indices<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    map_chunks(n, ROW_CHUNK, |r| r.map(&f).sum::<f64>())
        .into_iter()
        .sum()
}

/// Number of worker threads available to the helpers above.
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Runs `f` with at most `threads` workers (0 means the default pool).
pub fn with_threads<R, F>(threads: usize, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    {
        if threads == 0 {
            return f();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(f),
            Err(e) => {
                log::warn!("could not build a {threads}-thread pool ({e}); using the default pool");
                f()
            }
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}
