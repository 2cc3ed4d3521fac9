//! Work partitioning for the parallel strategies.
//!
//! * `Serial`: one worker, no pool.
//! * `Naive`: factor rows are owned whole by one worker each.
//! * `Improved`: the mode's entry permutation is cut into `L` contiguous
//!   slices; per-row partial sums are merged in worker-rank order.
//!
//! The core phase is identical under `Naive` and `Improved`: the sampled batch
//! is cut into `L` contiguous slices and partial accumulators are merged in
//! rank order.

use std::ops::Range;
use std::str::FromStr;

use rayon::prelude::*;
use rayon::ThreadPool;

use crate::error::{Error, Result};
use crate::sptensor::ModeGroup;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    Serial,
    Naive,
    Improved,
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "serial" => Ok(Strategy::Serial),
            "naive" => Ok(Strategy::Naive),
            "improved" => Ok(Strategy::Improved),
            other => Err(Error::Config(format!(
                "unknown strategy {other:?} (expected serial, naive or improved)"
            ))),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::Serial => "serial",
            Strategy::Naive => "naive",
            Strategy::Improved => "improved",
        })
    }
}

/// Row-to-worker policy for the naive strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Balance {
    /// Round-robin by row index.
    Static,
    /// Greedy longest-processing-time by bucket size.
    Dynamic,
}

impl FromStr for Balance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "static" => Ok(Balance::Static),
            "dynamic" => Ok(Balance::Dynamic),
            other => Err(Error::Config(format!(
                "unknown balance policy {other:?} (expected static or dynamic)"
            ))),
        }
    }
}

impl std::fmt::Display for Balance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Balance::Static => "static",
            Balance::Dynamic => "dynamic",
        })
    }
}

/// Strategy, worker count and the thread pool that executes it.
pub struct ParallelPlan {
    strategy: Strategy,
    workers: usize,
    balance: Balance,
    pool: Option<ThreadPool>,
}

impl std::fmt::Debug for ParallelPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParallelPlan")
            .field("strategy", &self.strategy)
            .field("workers", &self.workers)
            .field("balance", &self.balance)
            .finish()
    }
}

impl ParallelPlan {
    /// `Serial` always runs with one worker regardless of `workers`.
    pub fn new(strategy: Strategy, workers: usize, balance: Balance) -> Result<Self> {
        if workers == 0 {
            return Err(Error::Config("worker count must be at least 1".into()));
        }
        let workers = if strategy == Strategy::Serial { 1 } else { workers };
        let pool = if workers > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
            Some(pool)
        } else {
            None
        };
        Ok(ParallelPlan {
            strategy,
            workers,
            balance,
            pool,
        })
    }

    pub fn serial() -> Self {
        ParallelPlan {
            strategy: Strategy::Serial,
            workers: 1,
            balance: Balance::Static,
            pool: None,
        }
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn balance(&self) -> Balance {
        self.balance
    }

    /// Runs `f(rank, item)` for every item, one task per item, on the pool.
    pub fn for_each_mut<T, F>(&self, items: &mut [T], f: F)
    where
        T: Send,
        F: Fn(usize, &mut T) + Sync + Send,
    {
        match &self.pool {
            Some(pool) if items.len() > 1 => pool.install(|| {
                items.par_iter_mut().enumerate().for_each(|(l, it)| f(l, it));
            }),
            _ => items.iter_mut().enumerate().for_each(|(l, it)| f(l, it)),
        }
    }

    /// Maps `0..tasks` on the pool; results come back in task order.
    pub fn map<T, F>(&self, tasks: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match &self.pool {
            Some(pool) if tasks > 1 => pool.install(|| (0..tasks).into_par_iter().map(&f).collect()),
            _ => (0..tasks).map(f).collect(),
        }
    }
}

/// Contiguous slices of `0..len` whose sizes differ by at most one.
///
/// Fewer than `workers` slices are returned when `len < workers`; an empty
/// range yields no slices.
pub fn partition_core_batch(len: usize, workers: usize) -> Vec<Range<usize>> {
    let l = workers.max(1).min(len);
    if l == 0 {
        return Vec::new();
    }
    let (base, rem) = (len / l, len % l);
    let mut start = 0;
    (0..l)
        .map(|k| {
            let size = base + usize::from(k < rem);
            let r = start..start + size;
            start += size;
            r
        })
        .collect()
}

/// Entry counts per worker for a row assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadStats {
    pub loads: Vec<usize>,
}

impl LoadStats {
    pub fn max(&self) -> usize {
        self.loads.iter().copied().max().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.loads.iter().sum()
    }

    /// Perfectly balanced load `total / L`.
    pub fn ideal(&self) -> f64 {
        self.total() as f64 / self.loads.len().max(1) as f64
    }

    /// `ε` in `max = (1 + ε) · ideal`.
    pub fn imbalance(&self) -> f64 {
        let ideal = self.ideal();
        if ideal == 0.0 {
            0.0
        } else {
            self.max() as f64 / ideal - 1.0
        }
    }
}

/// Rows owned by each worker, ascending within a worker.
#[derive(Clone, Debug, PartialEq)]
pub struct RowAssignment {
    pub rows: Vec<Vec<usize>>,
    pub stats: LoadStats,
}

impl RowAssignment {
    /// Worker of every row (`usize::MAX` for none).
    pub fn owner_map(&self, n_rows: usize) -> Vec<usize> {
        let mut owner = vec![usize::MAX; n_rows];
        for (l, rows) in self.rows.iter().enumerate() {
            for &r in rows {
                owner[r] = l;
            }
        }
        owner
    }
}

/// Assigns the rows of one mode to `workers` workers by bucket size.
pub fn assign_factor_rows(group: &ModeGroup, workers: usize, balance: Balance) -> RowAssignment {
    let sizes: Vec<usize> = (0..group.rows()).map(|r| group.bucket_len(r)).collect();
    assign_by_size(&sizes, workers, balance)
}

/// [`assign_factor_rows`] on bare bucket sizes.
pub fn assign_by_size(sizes: &[usize], workers: usize, balance: Balance) -> RowAssignment {
    let l = workers.max(1);
    let mut rows = vec![Vec::new(); l];
    let mut loads = vec![0usize; l];
    match balance {
        Balance::Static => {
            for (r, &s) in sizes.iter().enumerate() {
                rows[r % l].push(r);
                loads[r % l] += s;
            }
        }
        Balance::Dynamic => {
            let mut order: Vec<usize> = (0..sizes.len()).collect();
            order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
            for r in order {
                let (w, _) = loads
                    .iter()
                    .enumerate()
                    .min_by_key(|&(k, &load)| (load, k))
                    .expect("at least one worker");
                rows[w].push(r);
                loads[w] += sizes[r];
            }
            for rs in &mut rows {
                rs.sort_unstable();
            }
        }
    }
    RowAssignment {
        rows,
        stats: LoadStats { loads },
    }
}

/// Elementwise sum of equally sized partials, merged in ascending rank order.
pub fn reduce(partials: &[&[f64]]) -> Result<Vec<f64>> {
    let Some(first) = partials.first() else {
        return Err(Error::Internal("reduce over zero partials".into()));
    };
    let mut out = first.to_vec();
    for p in &partials[1..] {
        reduce_into(&mut out, p)?;
    }
    Ok(out)
}

pub fn reduce_into(acc: &mut [f64], partial: &[f64]) -> Result<()> {
    if acc.len() != partial.len() {
        return Err(Error::Internal(format!(
            "reduce of mismatched partials: {} vs {}",
            acc.len(),
            partial.len()
        )));
    }
    for (a, p) in acc.iter_mut().zip(partial) {
        *a += p;
    }
    Ok(())
}
