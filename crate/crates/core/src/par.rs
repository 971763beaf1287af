//! Thin dispatch layer over rayon.
//!
//! With the `parallel` feature the helpers fan out on the current rayon
//! pool; without it they run the same closures sequentially. Every helper
//! preserves index order in its output so reductions stay deterministic
//! regardless of worker count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, collecting results in index order.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
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

/// Runs `f(index, chunk)` over consecutive mutable chunks of `data`.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if chunk == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
}

/// Runs `f(index, in_chunk, out_chunk)` over paired chunks.
pub fn for_each_chunk_pair<F>(input: &[f64], in_chunk: usize, out: &mut [f64], out_chunk: usize, f: F)
where
    F: Fn(usize, &[f64], &mut [f64]) + Sync + Send,
{
    if in_chunk == 0 || out_chunk == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    {
        input
            .par_chunks(in_chunk)
            .zip(out.par_chunks_mut(out_chunk))
            .enumerate()
            .for_each(|(i, (a, b))| f(i, a, b));
    }
    #[cfg(not(feature = "parallel"))]
    {
        input
            .chunks(in_chunk)
            .zip(out.chunks_mut(out_chunk))
            .enumerate()
            .for_each(|(i, (a, b))| f(i, a, b));
    }
}

/// Number of workers the current pool would use.
pub fn workers() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Sums `values` with a fixed pairwise tree so the result does not depend
/// on how the values were produced.
pub fn tree_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            let (a, b) = values.split_at(n / 2);
            tree_sum(a) + tree_sum(b)
        }
    }
}
