//! Data-parallel map helpers.
//!
//! With the `parallel` feature (default) the maps run on rayon; without it
//! they fall back to plain sequential iteration. Callers pass a pure
//! per-index closure, so results never depend on thread count or schedule.

#[cfg(feature = "parallel")]
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Sequential reference used by benches to compare against the parallel path.
#[allow(dead_code)]
pub fn map_indexed_serial<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Cap the global worker pool. Must run before the first parallel call;
/// later calls fail. A no-op without the `parallel` feature.
#[cfg(feature = "parallel")]
pub fn limit_threads(n: usize) -> std::result::Result<(), String> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

#[cfg(not(feature = "parallel"))]
pub fn limit_threads(_n: usize) -> std::result::Result<(), String> {
    Ok(())
}
