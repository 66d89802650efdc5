//! Parallel reductions with a fixed summation order.
//!
//! Work is split into chunks of `CHUNK` items regardless of the thread count,
//! each chunk is summed left to right, and the chunk totals are then added in
//! chunk order. The result is bit-identical for any pool size.

use rayon::prelude::*;

pub(crate) const CHUNK: usize = 256;

/// `Σ_i f(i)` over `0..n` for vector-valued `f`, which adds its term into
/// the accumulator it is handed.
pub(crate) fn ordered_sum<F>(n: usize, width: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let partials: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; width];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                f(i, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; width];
    for p in &partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    total
}
