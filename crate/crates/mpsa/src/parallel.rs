//! Data-parallel map over vertex indices with a sequential fallback.
//!
//! Per-vertex work (local solves, coercivity checks) is independent and
//! merged by index, so results are deterministic regardless of scheduling.
//! The `parallel` feature switches the default path to rayon; the `_seq`
//! variants stay available for benchmarking the two against each other.

/// Map `f` over `0..n` collecting results in index order.
#[cfg(feature = "parallel")]
pub fn map_indexed<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    map_indexed_seq(n, f)
}

/// Sequential twin of [`map_indexed`].
pub fn map_indexed_seq<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..n).map(f).collect()
}

/// Configure the global worker pool. `0` leaves the default. Calling twice is
/// harmless (later calls are ignored by rayon).
pub fn set_threads(threads: usize) {
    #[cfg(feature = "parallel")]
    if threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree() {
        let f = |i: usize| (i * i) as u64;
        assert_eq!(map_indexed(100, f), map_indexed_seq(100, f));
    }
}
