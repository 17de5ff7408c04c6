use std::ops::Range;

use rayon::prelude::*;

/// Splits `0..len` into `threads` contiguous blocks, runs `work` on each and
/// returns the results in block order. With one thread the whole range is
/// processed on the calling thread, so reductions over the result are
/// reproducible bit for bit.
pub(crate) fn map_blocks<T, F>(len: usize, threads: usize, work: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync,
{
    let blocks = threads.clamp(1, len.max(1));
    if blocks == 1 {
        return vec![work(0..len)];
    }
    let ranges: Vec<Range<usize>> = (0..blocks)
        .map(|b| (b * len / blocks)..((b + 1) * len / blocks))
        .collect();
    match rayon::ThreadPoolBuilder::new().num_threads(blocks).build() {
        Ok(pool) => pool.install(|| ranges.into_par_iter().map(&work).collect()),
        Err(_) => ranges.into_iter().map(work).collect(),
    }
}

/// Runs `work` on every index with up to `threads` workers; results keep
/// index order.
pub(crate) fn map_items<T, F>(len: usize, threads: usize, work: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let threads = threads.clamp(1, len.max(1));
    if threads == 1 {
        return (0..len).map(work).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| (0..len).into_par_iter().map(&work).collect()),
        Err(_) => (0..len).map(work).collect(),
    }
}

/// Thread count from `CENTRANK_THREADS`, else the available parallelism.
pub fn default_threads() -> usize {
    std::env::var("CENTRANK_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}
