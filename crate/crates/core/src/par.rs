//! Deterministic fan-out. Work is cut into fixed-size chunks whose
//! boundaries depend only on the problem size; chunk results are combined in
//! index order, so the `parallel` feature never changes a floating-point sum.

use crate::prelude::*;

pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Sum of `(scalar, vector)` contributions over `0..n`, computed chunk-wise
/// and reduced pairwise.
pub(crate) fn chunked_sum<F>(n: usize, chunk: usize, dim: usize, f: F) -> (f64, Vec<f64>)
where
    F: Fn(core::ops::Range<usize>) -> (f64, Vec<f64>) + Sync + Send,
{
    let n_chunks = n.div_ceil(chunk).max(1);
    let parts = map_indexed(n_chunks, |c| f(c * chunk..((c + 1) * chunk).min(n)));
    reduce_pairwise(&parts, dim)
}

fn reduce_pairwise(parts: &[(f64, Vec<f64>)], dim: usize) -> (f64, Vec<f64>) {
    match parts.len() {
        0 => (0.0, vec![0.0; dim]),
        1 => parts[0].clone(),
        len => {
            let (a, b) = (reduce_pairwise(&parts[..len / 2], dim), reduce_pairwise(&parts[len / 2..], dim));
            (a.0 + b.0, a.1.iter().zip(&b.1).map(|(x, y)| x + y).collect())
        }
    }
}
