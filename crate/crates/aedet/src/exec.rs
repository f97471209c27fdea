//! Execution strategy for the data-parallel inner loops.
//!
//! Batch members during training, per-sample feature extraction and grid
//! cells are independent units of work. With the `parallel` feature (the
//! default) they run on the rayon pool; without it the crate has no rayon
//! dependency and the same loops run sequentially. Outputs are collected in
//! input order and reductions happen after collection, so results are
//! bit-identical across both paths and any thread count.

use std::sync::atomic::{AtomicBool, Ordering};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

static FORCE_SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Forces the sequential path even when the `parallel` feature is compiled
/// in. Used by benchmarks to compare both execution paths in one binary.
pub fn force_sequential(on: bool) {
    FORCE_SEQUENTIAL.store(on, Ordering::SeqCst);
}

/// Whether calls will currently fan out to the rayon pool.
pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.load(Ordering::SeqCst)
}

/// Maps `f` over `items`, preserving input order in the output.
pub fn map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel_enabled() {
        return items.par_iter().map(f).collect();
    }
    items.iter().map(f).collect()
}

/// Maps `f` over `0..n`, preserving index order in the output.
pub fn map_indices<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel_enabled() {
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_slice_preserves_order() {
        let xs: Vec<u32> = (0..1000).collect();
        let ys = map_slice(&xs, |x| x * 2);
        assert_eq!(ys, xs.iter().map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let xs: Vec<f32> = (0..512).map(|i| i as f32 * 0.37).collect();
        let par = map_slice(&xs, |x| x.sin() * x.cos());
        force_sequential(true);
        let seq = map_slice(&xs, |x| x.sin() * x.cos());
        force_sequential(false);
        assert_eq!(par, seq);
    }

    #[test]
    fn map_indices_matches_range() {
        assert_eq!(map_indices(5, |i| i * i), vec![0, 1, 4, 9, 16]);
    }
}
