//! Deterministic block execution, parallel or sequential.
//!
//! Trials are cut into fixed-size blocks. Each block is a pure function of
//! its trial range, block results are returned in block order and merged
//! sequentially by the caller, so results never depend on the worker count.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Trials per work unit.
pub const BLOCK_TRIALS: u64 = 1024;

/// How blocks are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Execution {
    Sequential,
    /// Data-parallel over blocks. `threads = None` uses the global pool.
    /// Without the `parallel` feature this runs sequentially.
    #[default]
    Parallel,
    ParallelWith {
        threads: usize,
    },
}

impl Execution {
    /// `0` means "all cores", `1` sequential.
    pub fn from_threads(threads: usize) -> Self {
        match threads {
            0 => Execution::Parallel,
            1 => Execution::Sequential,
            t => Execution::ParallelWith { threads: t },
        }
    }

    /// True when this build can actually run blocks concurrently.
    pub fn is_parallel(&self) -> bool {
        cfg!(feature = "parallel") && !matches!(self, Execution::Sequential)
    }
}

/// Split `trials` into consecutive block ranges of `BLOCK_TRIALS`, starting
/// at trial index `start`.
pub fn blocks(start: u64, trials: u64) -> Vec<Range<u64>> {
    let end = start + trials;
    let mut out = Vec::with_capacity(trials.div_ceil(BLOCK_TRIALS) as usize);
    let mut a = start;
    while a < end {
        let b = (a + BLOCK_TRIALS).min(end);
        out.push(a..b);
        a = b;
    }
    out
}

/// Evaluate `f` on every block and return the results in block order.
pub fn map_blocks<A, F>(exec: Execution, ranges: &[Range<u64>], f: F) -> Result<Vec<A>>
where
    A: Send,
    F: Fn(Range<u64>) -> Result<A> + Sync + Send,
{
    match exec {
        Execution::Sequential => ranges.iter().cloned().map(&f).collect(),
        Execution::Parallel => parallel_map(None, ranges, f),
        Execution::ParallelWith { threads } => {
            if threads == 0 {
                return Err(invalid("threads", "must be positive"));
            }
            parallel_map(Some(threads), ranges, f)
        }
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<A, F>(threads: Option<usize>, ranges: &[Range<u64>], f: F) -> Result<Vec<A>>
where
    A: Send,
    F: Fn(Range<u64>) -> Result<A> + Sync + Send,
{
    use rayon::prelude::*;
    let run = || {
        ranges
            .par_iter()
            .cloned()
            .map(&f)
            .collect::<Result<Vec<A>>>()
    };
    match threads {
        None => run(),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| invalid("threads", e.to_string()))?
            .install(run),
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<A, F>(_threads: Option<usize>, ranges: &[Range<u64>], f: F) -> Result<Vec<A>>
where
    A: Send,
    F: Fn(Range<u64>) -> Result<A> + Sync + Send,
{
    ranges.iter().cloned().map(&f).collect()
}

/// Map over blocks and fold the results in block order.
pub fn map_reduce<A, F, R>(
    exec: Execution,
    start: u64,
    trials: u64,
    init: R,
    f: F,
    mut merge: impl FnMut(&mut R, A),
) -> Result<R>
where
    A: Send,
    F: Fn(Range<u64>) -> Result<A> + Sync + Send,
{
    let ranges = blocks(start, trials);
    let mut acc = init;
    for part in map_blocks(exec, &ranges, f)? {
        merge(&mut acc, part);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_cover_range() {
        let b = blocks(5, 2 * BLOCK_TRIALS + 3);
        assert_eq!(b.len(), 3);
        assert_eq!(b[0].start, 5);
        assert_eq!(b[2].end, 5 + 2 * BLOCK_TRIALS + 3);
        assert!(b.windows(2).all(|w| w[0].end == w[1].start));
        assert!(blocks(0, 0).is_empty());
    }

    #[test]
    fn order_preserved_for_any_schedule() {
        let ranges = blocks(0, 10 * BLOCK_TRIALS + 7);
        let f = |r: Range<u64>| Ok(r.map(|i| (i as f64).sqrt()).sum::<f64>());
        let seq = map_blocks(Execution::Sequential, &ranges, f).unwrap();
        for exec in [Execution::Parallel, Execution::ParallelWith { threads: 3 }] {
            assert_eq!(map_blocks(exec, &ranges, f).unwrap(), seq);
        }
        assert!(map_blocks(Execution::ParallelWith { threads: 0 }, &ranges, f).is_err());
    }

    #[test]
    fn thread_mapping() {
        assert_eq!(Execution::from_threads(1), Execution::Sequential);
        assert_eq!(Execution::from_threads(0), Execution::Parallel);
        assert_eq!(
            Execution::from_threads(4),
            Execution::ParallelWith { threads: 4 }
        );
        assert!(!Execution::Sequential.is_parallel());
    }
}
