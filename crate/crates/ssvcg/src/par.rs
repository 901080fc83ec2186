//! Order-preserving batch map with a data-parallel implementation behind the
//! `parallel` feature and a sequential fallback without it.
//!
//! Reductions downstream of these maps (argmax scans, violation counts) are
//! done sequentially over the collected vector, so results are identical
//! whichever implementation runs and however many threads rayon uses.

#[cfg(feature = "parallel")]
pub fn map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Always-sequential twin of [`map_slice`], kept callable with the `parallel`
/// feature on so benches can measure the speedup against the same build.
pub fn map_slice_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}
