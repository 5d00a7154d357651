//! Data-parallel helpers with always-available sequential fallbacks.
//!
//! With the `parallel` feature (default) the `map_*` helpers fan out over
//! rayon; without it they run sequentially. Reductions use a fixed chunk
//! decomposition folded in chunk order, so sums associate identically in
//! both modes and results are bit-for-bit reproducible regardless of thread
//! count. The `*_serial` variants are always compiled; benchmarks compare
//! them against the parallel paths directly.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length for deterministic reductions.
const CHUNK: usize = 1024;

/// `(0..n).map(f)` collected in index order, sequentially.
pub fn map_indexed_serial<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}

/// `(0..n).map(f)` collected in index order; parallel when the feature is
/// enabled. `f` must be pure, results are position-stable either way.
#[cfg(feature = "parallel")]
pub fn map_indexed<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    map_indexed_serial(n, f)
}

/// Fixed-chunk partial sums folded in order: deterministic association.
fn chunk_partials_serial(xs: &[f64]) -> Vec<f64> {
    xs.chunks(CHUNK).map(|c| c.iter().sum()).collect()
}

#[cfg(feature = "parallel")]
fn chunk_partials(xs: &[f64]) -> Vec<f64> {
    xs.par_chunks(CHUNK).map(|c| c.iter().sum()).collect()
}

#[cfg(not(feature = "parallel"))]
fn chunk_partials(xs: &[f64]) -> Vec<f64> {
    chunk_partials_serial(xs)
}

/// Deterministic sum, sequential chunking.
pub fn sum_serial(xs: &[f64]) -> f64 {
    chunk_partials_serial(xs).iter().sum()
}

/// Deterministic sum; identical result with and without the `parallel`
/// feature because the chunk decomposition is fixed.
pub fn sum(xs: &[f64]) -> f64 {
    chunk_partials(xs).iter().sum()
}

/// Weighted inner product `sum_i w_i x_i y_i` with deterministic
/// association.
pub fn weighted_dot(w: &[f64], x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(w.len(), x.len());
    debug_assert_eq!(w.len(), y.len());
    let partial: Vec<f64> = {
        #[cfg(feature = "parallel")]
        {
            w.par_chunks(CHUNK)
                .zip(x.par_chunks(CHUNK).zip(y.par_chunks(CHUNK)))
                .map(|(wc, (xc, yc))| {
                    wc.iter()
                        .zip(xc.iter().zip(yc))
                        .map(|(w, (x, y))| w * x * y)
                        .sum()
                })
                .collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            w.chunks(CHUNK)
                .zip(x.chunks(CHUNK).zip(y.chunks(CHUNK)))
                .map(|(wc, (xc, yc))| {
                    wc.iter()
                        .zip(xc.iter().zip(yc))
                        .map(|(w, (x, y))| w * x * y)
                        .sum()
                })
                .collect()
        }
    };
    partial.iter().sum()
}

/// Weighted L2 norm `sqrt(sum_i w_i x_i^2)`.
pub fn weighted_norm(w: &[f64], x: &[f64]) -> f64 {
    weighted_dot(w, x, x).sqrt()
}

/// Max-norm.
pub fn max_abs(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Euclidean norm with deterministic association.
pub fn norm2(xs: &[f64]) -> f64 {
    let sq: Vec<f64> = chunk_partials_sq(xs);
    sq.iter().sum::<f64>().sqrt()
}

#[cfg(feature = "parallel")]
fn chunk_partials_sq(xs: &[f64]) -> Vec<f64> {
    xs.par_chunks(CHUNK)
        .map(|c| c.iter().map(|v| v * v).sum())
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn chunk_partials_sq(xs: &[f64]) -> Vec<f64> {
    xs.chunks(CHUNK).map(|c| c.iter().map(|v| v * v).sum()).collect()
}
