//! Data-parallel helpers. With the `parallel` feature these fan out on rayon;
//! without it they run sequentially. Reductions use fixed-size chunks summed
//! in chunk order, so results are bit-identical for every thread count and
//! for both builds.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Samples per partial sum in [`chunked_sum`].
pub const REDUCTION_CHUNK: usize = 256;

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// `f(0), f(1), ..., f(n - 1)` in index order.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
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

pub fn map_slice<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Sums `dim`-length contributions of `n_items` items. `accumulate(range, out)`
/// adds the contributions of `range` into `out`.
pub fn chunked_sum<F>(n_items: usize, dim: usize, accumulate: F) -> Vec<f64>
where
    F: Fn(std::ops::Range<usize>, &mut [f64]) + Sync + Send,
{
    let n_chunks = n_items.div_ceil(REDUCTION_CHUNK);
    let partials = map_range(n_chunks, |c| {
        let start = c * REDUCTION_CHUNK;
        let end = (start + REDUCTION_CHUNK).min(n_items);
        let mut out = vec![0.0; dim];
        accumulate(start..end, &mut out);
        out
    });
    let mut total = vec![0.0; dim];
    for part in partials {
        for (t, p) in total.iter_mut().zip(part) {
            *t += p;
        }
    }
    total
}

/// Runs `f` on a pool of `threads` workers (`0` = library default).
pub fn install<R, F>(threads: usize, f: F) -> R
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
            Err(err) => {
                log::warn!(
                    "could not build a {threads}-thread pool ({err}); using the global pool"
                );
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
