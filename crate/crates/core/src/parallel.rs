//! Execution mode for the data-parallel loops (per-triple gradients,
//! per-entity encoding, per-test-triple ranking).
//!
//! Results are always collected in input order, so both modes produce
//! bit-identical output. Without the `parallel` feature, `Exec::Parallel`
//! runs sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    pub fn map<T, U, F>(self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => items.par_iter().map(f).collect(),
            _ => items.iter().map(f).collect(),
        }
    }

    pub fn map_range<U, F>(self, n: usize, f: F) -> Vec<U>
    where
        U: Send,
        F: Fn(usize) -> U + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => (0..n).into_par_iter().map(f).collect(),
            _ => (0..n).map(f).collect(),
        }
    }

    /// Apply `f` to every `chunk`-sized slice of `data` along with its index.
    /// Returns the error of the lowest-indexed failing chunk, if any.
    pub fn try_for_each_chunk<E, F>(self, data: &mut [f64], chunk: usize, f: F) -> Result<(), E>
    where
        E: Send,
        F: Fn(usize, &mut [f64]) -> Result<(), E> + Sync + Send,
    {
        if chunk == 0 {
            return Ok(());
        }
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => data
                .par_chunks_mut(chunk)
                .enumerate()
                .map(|(i, c)| f(i, c))
                .collect::<Vec<_>>()
                .into_iter()
                .collect(),
            _ => data.chunks_mut(chunk).enumerate().try_for_each(|(i, c)| f(i, c)),
        }
    }
}

/// Cap the global worker pool. `1` makes `Exec::Parallel` effectively sequential.
/// Only the first call has an effect.
pub fn set_threads(threads: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}
