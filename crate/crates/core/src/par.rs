//! Internal helpers that run an indexed map either on rayon or
//! sequentially. Results are assembled in index order, so both paths
//! produce bit-identical output.
//!
//! Public but hidden: the benchmark suite uses the two explicit variants
//! to compare execution policies on identical workloads.

/// Always-sequential indexed map.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T + Sync + Send,
    T: Send,
{
    (0..n).map(f).collect()
}

/// Rayon-parallel indexed map, available with the `parallel` feature.
#[cfg(feature = "parallel")]
pub fn map_indexed_par<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T + Sync + Send,
    T: Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

/// Indexed map using the compile-time default execution policy.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T + Sync + Send,
    T: Send,
{
    map_indexed_par(n, f)
}

/// Indexed map using the compile-time default execution policy.
#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T + Sync + Send,
    T: Send,
{
    map_indexed_seq(n, f)
}
