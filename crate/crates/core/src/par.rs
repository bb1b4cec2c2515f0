//! Data-parallel loop helpers.
//!
//! With the `parallel` feature these run on the rayon thread pool; without it
//! they are plain sequential loops. Reductions are split into fixed-size chunks
//! whose partial sums are combined in index order, so results are bit-identical
//! across thread counts and across both builds.

/// Chunk length used for every chunked loop and reduction.
pub const CHUNK: usize = 1024;

/// `out[i] = f(i)` for every index.
pub fn fill_indexed<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        out.par_chunks_mut(CHUNK)
            .enumerate()
            .for_each(|(c, chunk)| fill_chunk(chunk, c * CHUNK, &f));
    }
    #[cfg(not(feature = "parallel"))]
    fill_indexed_serial(out, f);
}

pub fn fill_indexed_serial<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64,
{
    for (c, chunk) in out.chunks_mut(CHUNK).enumerate() {
        fill_chunk(chunk, c * CHUNK, &f);
    }
}

fn fill_chunk<F: Fn(usize) -> f64>(chunk: &mut [f64], offset: usize, f: &F) {
    for (k, v) in chunk.iter_mut().enumerate() {
        *v = f(offset + k);
    }
}

/// Σ f(i) for i in 0..n, deterministic.
pub fn sum_indexed<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let partial: Vec<f64> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| chunk_sum(c, n, &f))
            .collect();
        partial.iter().sum()
    }
    #[cfg(not(feature = "parallel"))]
    sum_indexed_serial(n, f)
}

pub fn sum_indexed_serial<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64,
{
    let partial: Vec<f64> = (0..n.div_ceil(CHUNK))
        .map(|c| chunk_sum(c, n, &f))
        .collect();
    partial.iter().sum()
}

fn chunk_sum<F: Fn(usize) -> f64>(c: usize, n: usize, f: &F) -> f64 {
    let end = ((c + 1) * CHUNK).min(n);
    (c * CHUNK..end).map(f).sum()
}

/// `(0..n).map(f).collect()`, order preserved.
pub fn map_collect<T, F>(n: usize, f: F) -> Vec<T>
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
    (0..n).map(f).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    sum_indexed(a.len(), |i| a[i] * b[i])
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// y += alpha * x
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reductions_match_serial_bitwise() {
        let n = 10_007;
        let f = |i: usize| ((i as f64) * 0.37).sin() / (1.0 + i as f64);
        assert_eq!(
            sum_indexed(n, f).to_bits(),
            sum_indexed_serial(n, f).to_bits()
        );
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        fill_indexed(&mut a, f);
        fill_indexed_serial(&mut b, f);
        assert_eq!(a, b);
    }

    #[test]
    fn empty_sum_is_zero() {
        assert_eq!(sum_indexed(0, |_| 1.0), 0.0);
    }
}
