//! Work partitioning and the worker executor.
//!
//! Each layer is a list of independent work units. Units are split into
//! contiguous, balanced chunks, one per worker; a worker owns the mutable
//! state of its units and its own counters, so nothing is shared while a
//! layer runs. Counters are merged after the layer barrier.

use std::ops::Range;

use crate::fxp::Acc32;
use crate::instrument::Counters;

/// Upper bound on concurrent workers (one cluster of eight cores).
pub const MAX_WORKERS: usize = 8;

/// Assignment of `units` work units to `workers` workers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkerPartition {
    ranges: Vec<Range<usize>>,
}

impl WorkerPartition {
    /// Contiguous chunks whose sizes differ by at most one; the first
    /// `units % workers` workers take the larger chunks.
    pub fn new(units: usize, workers: usize) -> Self {
        assert!(workers >= 1, "at least one worker");
        let base = units / workers;
        let extra = units % workers;
        let mut start = 0;
        let ranges = (0..workers)
            .map(|w| {
                let len = base + usize::from(w < extra);
                let r = start..start + len;
                start += len;
                r
            })
            .collect();
        WorkerPartition { ranges }
    }

    /// Every unit on worker 0, as the FC layer runs.
    pub fn single(units: usize, workers: usize) -> Self {
        let mut ranges = vec![units..units; workers];
        ranges[0] = 0..units;
        WorkerPartition { ranges }
    }

    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    pub fn workers(&self) -> usize {
        self.ranges.len()
    }

    pub fn units(&self) -> usize {
        self.ranges.last().map_or(0, |r| r.end)
    }

    pub fn worker_of(&self, unit: usize) -> Option<usize> {
        self.ranges.iter().position(|r| r.contains(&unit))
    }
}

/// Per-worker private context: counters and a reusable scratch buffer.
#[derive(Debug, Default)]
pub struct WorkerCtx {
    pub counters: Counters,
    pub scratch: Vec<Acc32>,
}

/// Runs `f(unit, state, ctx)` for every unit, each unit on the worker the
/// partition assigns it to. With one worker, or without the `parallel`
/// feature, workers run one after another on the calling thread.
pub fn run_units<S, F>(partition: &WorkerPartition, states: &mut [S], ctxs: &mut [WorkerCtx], f: F)
where
    S: Send,
    F: Fn(usize, &mut S, &mut WorkerCtx) + Sync,
{
    assert_eq!(states.len(), partition.units(), "one state per unit");
    assert_eq!(ctxs.len(), partition.workers(), "one context per worker");

    let mut jobs = Vec::with_capacity(partition.workers());
    let mut rest = states;
    for (range, ctx) in partition.ranges().iter().zip(ctxs.iter_mut()) {
        let (chunk, tail) = rest.split_at_mut(range.len());
        rest = tail;
        jobs.push((range.start, chunk, ctx));
    }

    let work = |(first, chunk, ctx): (usize, &mut [S], &mut WorkerCtx)| {
        for (i, state) in chunk.iter_mut().enumerate() {
            f(first + i, state, ctx);
        }
    };

    #[cfg(feature = "parallel")]
    if partition.workers() > 1 {
        let work = &work;
        pool(partition.workers()).scope(|s| {
            for job in jobs {
                s.spawn(move |_| work(job));
            }
        });
        return;
    }

    jobs.into_iter().for_each(work);
}

#[cfg(feature = "parallel")]
fn pool(workers: usize) -> &'static rayon::ThreadPool {
    use std::sync::OnceLock;
    static POOLS: [OnceLock<rayon::ThreadPool>; MAX_WORKERS] = [const { OnceLock::new() }; MAX_WORKERS];
    POOLS[workers - 1].get_or_init(|| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .thread_name(|i| format!("qeegnet-worker-{i}"))
            .build()
            .expect("failed to start worker pool")
    })
}
