//! Data-parallel helpers.
//!
//! With the `parallel` feature the helpers dispatch to rayon; without it
//! they run as plain iterators. [`sequential`] forces the sequential path
//! for the duration of a closure on the calling thread, which is how the
//! benchmarks compare both paths inside one binary.

use std::cell::Cell;

thread_local! {
    static FORCE_SEQUENTIAL: Cell<bool> = const { Cell::new(false) };
}

/// Runs `f` with every helper in this module pinned to the sequential path.
pub fn sequential<R>(f: impl FnOnce() -> R) -> R {
    let prev = FORCE_SEQUENTIAL.with(|c| c.replace(true));
    let out = f();
    FORCE_SEQUENTIAL.with(|c| c.set(prev));
    out
}

#[cfg(feature = "parallel")]
fn use_rayon() -> bool {
    !FORCE_SEQUENTIAL.with(|c| c.get())
}

/// Calls `f(row_index, row)` for every `width`-sized chunk of `data`.
pub fn for_each_row<T, F>(data: &mut [T], width: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Send + Sync,
{
    #[cfg(feature = "parallel")]
    if use_rayon() {
        use rayon::prelude::*;
        data.par_chunks_mut(width)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
        return;
    }
    data.chunks_mut(width)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
}

/// Row-wise map over a mutable buffer, collecting one output per row in row order.
pub fn map_rows<T, R, F>(data: &mut [T], width: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(usize, &mut [T]) -> R + Send + Sync,
{
    #[cfg(feature = "parallel")]
    if use_rayon() {
        use rayon::prelude::*;
        return data
            .par_chunks_mut(width)
            .enumerate()
            .map(|(i, row)| f(i, row))
            .collect();
    }
    data.chunks_mut(width)
        .enumerate()
        .map(|(i, row)| f(i, row))
        .collect()
}

/// Order-preserving map over a slice.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Send + Sync,
{
    #[cfg(feature = "parallel")]
    if use_rayon() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    items.iter().map(f).collect()
}

/// Order-preserving map over an index range.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Send + Sync,
{
    #[cfg(feature = "parallel")]
    if use_rayon() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Sizes the global worker pool. Must run before any parallel work; has no
/// effect without the `parallel` feature.
pub fn set_threads(n: usize) -> crate::error::Result<()> {
    if n == 0 {
        return Err(crate::error::Error::Config("worker count must be positive".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| crate::error::Error::Config(format!("worker pool: {e}")))?;
    Ok(())
}

/// Runs `a` and `b`, potentially in parallel.
pub fn join<A, B, RA, RB>(a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    #[cfg(feature = "parallel")]
    if use_rayon() {
        return rayon::join(a, b);
    }
    (a(), b())
}
