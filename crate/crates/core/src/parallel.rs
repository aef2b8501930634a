//! Deterministic parallel reductions: fixed-size chunks are reduced in
//! parallel and the partial results combined in chunk order, so the
//! floating-point result does not depend on the thread count.

use rayon::prelude::*;

const CHUNK: usize = 256;

/// Element-wise sum of `len`-vectors produced by `f(k, buf)` for `k < n`.
pub fn sum_vec<F>(n: usize, len: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let partial: Vec<Vec<f64>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; len];
            for k in c * CHUNK..((c + 1) * CHUNK).min(n) {
                f(k, &mut acc);
            }
            acc
        })
        .collect();
    let mut out = vec![0.0; len];
    for p in partial {
        for (o, x) in out.iter_mut().zip(p) {
            *o += x;
        }
    }
    out
}
