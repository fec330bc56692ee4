//! Data-parallel map helpers. With the `parallel` feature the work fans
//! out over rayon; without it the same calls run sequentially. Results
//! are collected in input order either way, so outputs are independent
//! of scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    Parallel,
}

impl ExecMode {
    pub fn default_mode() -> Self {
        if cfg!(feature = "parallel") {
            ExecMode::Parallel
        } else {
            ExecMode::Sequential
        }
    }
}

/// Map a function over indices 0..n, collecting results in index order.
pub fn map_indexed<T, F>(mode: ExecMode, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match mode {
        ExecMode::Sequential => (0..n).map(f).collect(),
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => (0..n).into_par_iter().map(f).collect(),
        #[cfg(not(feature = "parallel"))]
        ExecMode::Parallel => (0..n).map(f).collect(),
    }
}

/// Apply `f` to disjoint row chunks of a row-major matrix buffer.
pub fn for_each_row_chunk<F>(mode: ExecMode, buf: &mut [f64], row_len: usize, chunk_rows: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    let chunk = row_len * chunk_rows.max(1);
    match mode {
        ExecMode::Sequential => {
            for (i, c) in buf.chunks_mut(chunk).enumerate() {
                f(i * chunk_rows, c);
            }
        }
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => {
            buf.par_chunks_mut(chunk)
                .enumerate()
                .for_each(|(i, c)| f(i * chunk_rows, c));
        }
        #[cfg(not(feature = "parallel"))]
        ExecMode::Parallel => {
            for (i, c) in buf.chunks_mut(chunk).enumerate() {
                f(i * chunk_rows, c);
            }
        }
    }
}

/// Configure the global worker pool. `threads == 0` leaves the default.
pub fn configure_threads(threads: usize) {
    #[cfg(feature = "parallel")]
    if threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}
