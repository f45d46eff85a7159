//! Episode-level data parallelism.
//!
//! With the `parallel` feature (the default) the mapping helper fans work
//! across a rayon pool; without it the same call runs sequentially and
//! produces identical results. Work closures must not share RNG state:
//! every unit of work derives its own streams from `(seed, index)`.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, in parallel when the `parallel` feature is on.
/// Results come back in index order either way.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
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

/// Always-sequential twin of [`map_indexed`], kept callable with the feature
/// enabled so the bench suite can compare both paths in one build.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Caps the worker pool. A no-op without the `parallel` feature, and a no-op
/// after the pool has already been touched (rayon pins the global pool on
/// first use).
pub fn configure_workers(_n: usize) {
    #[cfg(feature = "parallel")]
    {
        if _n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(_n).build_global();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree() {
        let f = |i: usize| (i * i) as u64 + 1;
        assert_eq!(map_indexed(100, f), map_indexed_seq(100, f));
    }

    #[test]
    fn empty_range_is_fine() {
        let out: Vec<u8> = map_indexed(0, |_| 0u8);
        assert!(out.is_empty());
    }
}
