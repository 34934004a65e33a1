//! Batch execution helpers: rayon data-parallel maps with a sequential
//! fallback when the `parallel` feature is disabled.
//!
//! Every parallel construct here writes disjoint outputs, so results are
//! bit-identical regardless of thread count or scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `items`, in parallel when the `parallel` feature is on.
pub fn batch_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Sequential map with the same signature as [`batch_map`]; used as the
/// baseline in benchmarks.
pub fn seq_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Map `f` over index ranges `[chunk*k, chunk*(k+1))` covering `0..len`,
/// writing into disjoint slices of a preallocated output.
pub fn batch_chunks_mut<U, F>(out: &mut [U], chunk: usize, f: F)
where
    U: Send,
    F: Fn(usize, &mut [U]) + Sync + Send,
{
    assert!(chunk > 0);
    #[cfg(feature = "parallel")]
    {
        out.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, s)| f(i * chunk, s));
    }
    #[cfg(not(feature = "parallel"))]
    {
        out.chunks_mut(chunk).enumerate().for_each(|(i, s)| f(i * chunk, s));
    }
}

/// Sequential counterpart of [`batch_chunks_mut`] for benchmarking.
pub fn seq_chunks_mut<U, F>(out: &mut [U], chunk: usize, f: F)
where
    F: Fn(usize, &mut [U]),
{
    assert!(chunk > 0);
    out.chunks_mut(chunk).enumerate().for_each(|(i, s)| f(i * chunk, s));
}

/// Configure the global thread pool. Call once at startup; returns an error
/// string when the pool was already built (safe to ignore for tests).
pub fn set_threads(n: usize) -> Result<(), String> {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_map_matches_seq_map() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64 * 0.25).collect();
        let a = batch_map(&xs, |x| x.sin() * x.cos());
        let b = seq_map(&xs, |x| x.sin() * x.cos());
        assert_eq!(a, b);
    }

    #[test]
    fn chunked_writes_cover_everything() {
        let mut out = vec![0usize; 103];
        batch_chunks_mut(&mut out, 10, |start, s| {
            for (k, v) in s.iter_mut().enumerate() {
                *v = start + k;
            }
        });
        for (i, v) in out.iter().enumerate() {
            assert_eq!(*v, i);
        }
    }
}
