//! Internal switch between rayon-backed and sequential execution.
//!
//! Every data-parallel loop in the crate funnels through [`map_indexed`],
//! so the `parallel` feature changes only how work is scheduled, never
//! what is computed. Results are collected in index order and each index
//! derives its randomness from its own seed, which keeps outputs
//! bit-identical across thread counts and between the two builds.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[cfg(feature = "parallel")]
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}
