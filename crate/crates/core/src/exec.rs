//! Execution policy for the data-parallel inner loops.
//!
//! Every batch reduction in the crate goes through [`Execution`]. Work is cut
//! into fixed-size chunks, each chunk is reduced independently (in parallel
//! when the `parallel` feature is enabled) and the partial results are then
//! combined in chunk order. Because the chunking does not depend on the thread
//! count, sequential and parallel runs produce bit-identical floating point
//! results.

use serde::{Deserialize, Serialize};

/// Records per reduction chunk.
pub const CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// True when work will actually be spread over the rayon pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// Maps `f` over `items`, preserving order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Maps `f` over `0..n`, preserving order.
    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Reduces `items` chunk by chunk with `chunk_fn`, then folds the partial
    /// results left to right with `combine`.
    pub fn chunked_reduce<T, R, F, C>(self, items: &[T], chunk_fn: F, combine: C) -> Option<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&[T]) -> R + Sync + Send,
        C: Fn(R, R) -> R,
    {
        let partials: Vec<R> = {
            #[cfg(feature = "parallel")]
            {
                if self.is_parallel() {
                    use rayon::prelude::*;
                    items.par_chunks(CHUNK).map(&chunk_fn).collect()
                } else {
                    items.chunks(CHUNK).map(&chunk_fn).collect()
                }
            }
            #[cfg(not(feature = "parallel"))]
            {
                items.chunks(CHUNK).map(&chunk_fn).collect()
            }
        };
        partials.into_iter().reduce(combine)
    }
}
