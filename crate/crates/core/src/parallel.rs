//! Deterministic data-parallel reductions.
//!
//! Work is cut into fixed-size chunks that do not depend on the thread pool,
//! so floating point sums come out bit-identical across runs.

use rayon::prelude::*;

const CHUNK: usize = 1024;

pub(crate) fn det_sum<T, F>(len: usize, zero: T, f: F) -> T
where
    T: Send + Sync + Copy + std::ops::Add<Output = T>,
    F: Fn(usize) -> T + Sync + Send,
{
    let chunks = len.div_ceil(CHUNK);
    let partial: Vec<T> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(len);
            (lo..hi).fold(zero, |acc, i| acc + f(i))
        })
        .collect();
    partial.into_iter().fold(zero, |a, b| a + b)
}

pub(crate) fn det_map<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..len).into_par_iter().map(f).collect()
}
