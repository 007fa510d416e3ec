//! Row-parallel execution helpers.
//!
//! Every kernel in this crate writes its output one row at a time, and each
//! row is produced by a fixed sequential loop. Splitting rows across threads
//! therefore never changes a single bit of the result, which keeps training
//! runs reproducible whether or not the `parallel` feature is enabled.

/// Execution strategy for row-parallel kernels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    /// Uses rayon when the `parallel` feature is compiled in, otherwise
    /// behaves exactly like `Sequential`.
    Parallel,
}

impl Exec {
    /// The strategy used by the plain (non `_with`) entry points.
    pub fn auto() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Default for Exec {
    fn default() -> Self {
        Exec::auto()
    }
}

/// Fills `out`, viewed as rows of width `cols`, by calling `f(row_index, row)`.
pub(crate) fn fill_rows<F>(exec: Exec, out: &mut [f64], cols: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if cols == 0 || out.is_empty() {
        return;
    }
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            out.par_chunks_mut(cols).enumerate().for_each(|(i, row)| f(i, row));
        }
        _ => out.chunks_mut(cols).enumerate().for_each(|(i, row)| f(i, row)),
    }
}

/// Maps `0..n` through `f`, preserving order.
pub(crate) fn map_indices<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}
