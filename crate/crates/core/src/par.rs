//! Data-parallel loops with a sequential fallback.
//!
//! Every caller derives its randomness from the loop index, so results are
//! identical under either mode and any thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Uses rayon when the `parallel` feature is on; otherwise sequential.
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

#[cfg(feature = "parallel")]
const MIN_CHUNK: usize = 64;

pub(crate) fn for_each_mut<T, F>(items: &mut [T], exec: Execution, f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => items
            .par_iter_mut()
            .with_min_len(MIN_CHUNK)
            .enumerate()
            .for_each(|(i, x)| f(i, x)),
        _ => items.iter_mut().enumerate().for_each(|(i, x)| f(i, x)),
    }
}

/// Fallible loop over a handful of heavy items (one per individual);
/// stops at the first error.
pub(crate) fn try_for_each_heavy<T, E, F>(items: &mut [T], exec: Execution, f: F) -> Result<(), E>
where
    T: Send,
    E: Send,
    F: Fn(usize, &mut T) -> Result<(), E> + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => items
            .par_iter_mut()
            .enumerate()
            .try_for_each(|(i, x)| f(i, x)),
        _ => items.iter_mut().enumerate().try_for_each(|(i, x)| f(i, x)),
    }
}

/// Fallible per-item map over a mutable slice; results keep item order.
pub(crate) fn try_map_mut<T, R, E, F>(items: &mut [T], exec: Execution, f: F) -> Result<Vec<R>, E>
where
    T: Send,
    R: Send,
    E: Send,
    F: Fn(usize, &mut T) -> Result<R, E> + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => items
            .par_iter_mut()
            .with_min_len(MIN_CHUNK)
            .enumerate()
            .map(|(i, x)| f(i, x))
            .collect(),
        _ => items.iter_mut().enumerate().map(|(i, x)| f(i, x)).collect(),
    }
}

/// [`try_map_mut`] for a handful of heavy items.
pub(crate) fn try_map_heavy<T, R, E, F>(items: &mut [T], exec: Execution, f: F) -> Result<Vec<R>, E>
where
    T: Send,
    R: Send,
    E: Send,
    F: Fn(usize, &mut T) -> Result<R, E> + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => items
            .par_iter_mut()
            .enumerate()
            .map(|(i, x)| f(i, x))
            .collect(),
        _ => items.iter_mut().enumerate().map(|(i, x)| f(i, x)).collect(),
    }
}
