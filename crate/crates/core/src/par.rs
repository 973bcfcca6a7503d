//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature the helpers dispatch to rayon once the
//! estimated work exceeds a small threshold; otherwise they run in order on
//! the calling thread. Results are always collected in index order, so both
//! paths produce bitwise identical output.

use std::sync::atomic::{AtomicBool, Ordering};

static FORCE_SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Approximate number of flops below which dispatching to the pool is not worth it.
#[cfg(feature = "parallel")]
const MIN_PARALLEL_WORK: usize = 1 << 15;

/// Disable (or re-enable) the thread pool at runtime. Used by benchmarks.
pub fn set_sequential(on: bool) {
    FORCE_SEQUENTIAL.store(on, Ordering::Relaxed);
}

/// True when work may be distributed over threads.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.load(Ordering::Relaxed)
}

#[cfg(feature = "parallel")]
fn worth_it(n: usize, work_per_item: usize) -> bool {
    is_parallel() && n > 1 && n.saturating_mul(work_per_item) >= MIN_PARALLEL_WORK
}

/// `(0..n).map(f).collect()`, possibly in parallel.
pub fn map_range<R, F>(n: usize, work_per_item: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if worth_it(n, work_per_item) {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = work_per_item;
    (0..n).map(f).collect()
}

/// Apply `f(index, chunk)` to consecutive chunks of `data`, possibly in parallel.
pub fn for_each_chunk<F>(data: &mut [f64], chunk: usize, work_per_chunk: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if chunk == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    if worth_it(data.len() / chunk, work_per_chunk) {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk).enumerate().for_each(|(j, c)| f(j, c));
        return;
    }
    let _ = work_per_chunk;
    data.chunks_mut(chunk).enumerate().for_each(|(j, c)| f(j, c));
}
