//! Data-parallel helpers with a sequential fallback.
//!
//! Every helper preserves index order in its output, so results do not
//! depend on the thread count. Reductions are done by the callers over the
//! collected vectors in a fixed order.

/// How pointwise grid work is scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    #[default]
    Sequential,
    /// Uses the current rayon pool; falls back to sequential when the
    /// `parallel` feature is off.
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// `(0..len).map(f).collect()`.
    pub fn map_indices<T, F>(self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            use rayon::prelude::*;
            return (0..len).into_par_iter().map(f).collect();
        }
        (0..len).map(f).collect()
    }

    /// Calls `f(k, chunk)` on consecutive `chunk`-sized pieces of `out`.
    pub fn for_each_chunk<F>(self, out: &mut [f64], chunk: usize, f: F)
    where
        F: Fn(usize, &mut [f64]) + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            use rayon::prelude::*;
            out.par_chunks_mut(chunk).enumerate().for_each(|(k, c)| f(k, c));
            return;
        }
        out.chunks_mut(chunk).enumerate().for_each(|(k, c)| f(k, c));
    }
}
