//! Data-parallel map helpers.
//!
//! Everything embarrassingly parallel in this crate (shot trajectories,
//! calibration batches, scan points, folded-circuit variants) is expressed as
//! an indexed map `0..n -> T`. With the `parallel` feature the map runs on the
//! rayon pool; without it the same closure runs sequentially. Either way the
//! results come back in index order and callers reduce them sequentially, so
//! floating-point output does not depend on the thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, parallel when the `parallel` feature is enabled.
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

/// Sequential reference implementation of [`map_indexed`].
///
/// Kept unconditionally compiled so benchmarks can compare the parallel path
/// against it without rebuilding with different features.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}
