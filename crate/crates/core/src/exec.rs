//! Thin switch between the rayon-backed and the sequential execution of the
//! hot loops. Both paths produce bitwise-identical results: work is only ever
//! split across output chunks, and each output element is reduced
//! sequentially by exactly one task.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Apply `f` to consecutive chunks of `data`. `f` receives the offset of the
/// chunk start and the chunk itself.
pub(crate) fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync,
{
    debug_assert!(chunk > 0);
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(ci, c)| f(ci * chunk, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(chunk)
            .enumerate()
            .for_each(|(ci, c)| f(ci * chunk, c));
    }
}

/// Sequential variant with the same signature, kept callable regardless of
/// features so benchmarks can compare against the parallel path.
pub(crate) fn for_each_chunk_mut_serial<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync,
{
    debug_assert!(chunk > 0);
    data.chunks_mut(chunk)
        .enumerate()
        .for_each(|(ci, c)| f(ci * chunk, c));
}

/// Apply `f` to each element of an owned work list, in parallel when the
/// feature allows. `f` receives the element index.
pub(crate) fn for_each_item<T, F>(items: Vec<T>, f: F)
where
    T: Send,
    F: Fn(usize, T) + Sync,
{
    #[cfg(feature = "parallel")]
    {
        items
            .into_par_iter()
            .enumerate()
            .for_each(|(i, item)| f(i, item));
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().enumerate().for_each(|(i, item)| f(i, item));
    }
}
