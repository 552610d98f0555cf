//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) work is spread over the rayon pool.
//! Results are always assembled in index order and reductions are summed in a
//! fixed chunk order, so parallel and sequential runs are bit-identical.
//! [`with_sequential`] forces the sequential path on the current thread, which
//! the benchmarks use to compare both paths in one binary.

use std::cell::Cell;
use std::ops::Range;

thread_local! {
    static FORCE_SEQUENTIAL: Cell<bool> = const { Cell::new(false) };
}

/// Runs `f` with every helper in this module executing sequentially.
pub fn with_sequential<R>(f: impl FnOnce() -> R) -> R {
    let prev = FORCE_SEQUENTIAL.with(|c| c.replace(true));
    let out = f();
    FORCE_SEQUENTIAL.with(|c| c.set(prev));
    out
}

/// True when the helpers will dispatch to rayon.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.with(|c| c.get())
}

/// `(0..n).map(f).collect()`, parallel when enabled.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Splits `0..n` into at most `max_chunks` contiguous ranges of near-equal size.
/// The split depends only on `n` and `max_chunks`, never on the thread count.
pub fn chunk_ranges(n: usize, max_chunks: usize) -> Vec<Range<usize>> {
    if n == 0 {
        return Vec::new();
    }
    let chunks = max_chunks.clamp(1, n);
    let base = n / chunks;
    let extra = n % chunks;
    let mut out = Vec::with_capacity(chunks);
    let mut start = 0;
    for c in 0..chunks {
        let len = base + usize::from(c < extra);
        out.push(start..start + len);
        start += len;
    }
    out
}

/// Maps every chunk of `0..n` and returns the per-chunk results in order.
pub fn map_chunks<T, F>(n: usize, max_chunks: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync + Send,
{
    let ranges = chunk_ranges(n, max_chunks);
    map_indexed(ranges.len(), |c| f(ranges[c].clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_cover_range_exactly() {
        for n in [0usize, 1, 5, 16, 17, 1000] {
            let r = chunk_ranges(n, 16);
            let total: usize = r.iter().map(|r| r.len()).sum();
            assert_eq!(total, n);
            for w in r.windows(2) {
                assert_eq!(w[0].end, w[1].start);
            }
        }
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let f = |i: usize| (i as f64).sqrt();
        let a = map_indexed(1000, f);
        let b = with_sequential(|| map_indexed(1000, f));
        assert_eq!(a, b);
        assert!(!with_sequential(is_parallel));
    }
}
