// SPDX-License-Identifier: MIT OR Apache-2.0

//! Order-preserving batch map over independent work items.
//!
//! With the `parallel` feature, [`Execution::Parallel`] fans items out over
//! the rayon global pool. Without it every batch runs sequentially. Results
//! come back in input order either way, so outputs do not depend on the
//! execution mode.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How a batch is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// True when batches will actually run on more than one thread.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Self::Parallel
    }
}

/// Applies `f` to every item, returning results in input order.
pub fn map<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}
