//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) the helpers fan out over rayon's
//! global pool when [`Execution::Parallel`] is requested. Without the feature,
//! or with [`Execution::Sequential`], they run on the calling thread and give
//! bit-identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// Calls `f(row_index, row)` for every `row_len`-sized chunk of `data`.
pub fn for_each_row<T, F>(exec: Execution, data: &mut [T], row_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => data.par_chunks_mut(row_len).enumerate().for_each(|(i, row)| f(i, row)),
        _ => data.chunks_mut(row_len).enumerate().for_each(|(i, row)| f(i, row)),
    }
}

/// Like [`for_each_row`] but hands each worker a scratch value built by `init`.
pub fn for_each_row_with<T, S, I, F>(exec: Execution, data: &mut [T], row_len: usize, init: I, f: F)
where
    T: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, usize, &mut [T]) + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => data
            .par_chunks_mut(row_len)
            .enumerate()
            .for_each_init(&init, |s, (i, row)| f(s, i, row)),
        _ => {
            let mut s = init();
            data.chunks_mut(row_len)
                .enumerate()
                .for_each(|(i, row)| f(&mut s, i, row))
        }
    }
}

/// Order-preserving map over a slice.
pub fn map<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => items.par_iter().map(f).collect(),
        _ => items.iter().map(f).collect(),
    }
}
