//! Data-parallel helper with a sequential fallback.
//!
//! Results are always collected in index order, so reductions performed over
//! the returned vector are bitwise identical whether or not work ran in
//! parallel. Per-item RNG must be forked by index, never shared.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..count`, in parallel when `parallel` is true and the
/// `parallel` feature is enabled. Output order is by index either way.
pub fn map_indexed<T: Send>(
    count: usize,
    parallel: bool,
    f: impl Fn(usize) -> T + Sync + Send,
) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        if parallel {
            return (0..count).into_par_iter().map(f).collect();
        }
    }
    let _ = parallel;
    (0..count).map(f).collect()
}
