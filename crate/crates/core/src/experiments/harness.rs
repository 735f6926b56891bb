use rayon::prelude::*;

use crate::error::{Error, Result};

/// Replication-parallel executor. Replication `r` derives all of its randomness from
/// `(seed, r)`, and outputs are returned in replication order, so the worker count never
/// changes a result.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Harness {
    pub seed: u64,
    pub workers: usize,
}

impl Harness {
    pub fn new(seed: u64, workers: Option<usize>) -> Self {
        let workers = workers.filter(|&w| w > 0).unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        });
        Harness { seed, workers }
    }

    /// Run `task(r)` for `r = 0..replications`; the first failure, by index, aborts the batch.
    pub fn run_replications<T, F>(&self, replications: usize, task: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(u64) -> Result<T> + Sync,
    {
        let run = || -> Vec<Result<T>> {
            (0..replications as u64)
                .into_par_iter()
                .map(&task)
                .collect()
        };
        let outputs = if self.workers == 1 {
            (0..replications as u64).map(&task).collect()
        } else {
            rayon::ThreadPoolBuilder::new()
                .num_threads(self.workers)
                .build()
                .map_err(|e| {
                    Error::InvalidParameter(format!("cannot start {} workers: {e}", self.workers))
                })?
                .install(run)
        };
        outputs
            .into_iter()
            .enumerate()
            .map(|(index, r)| {
                r.map_err(|e| Error::Replication {
                    index,
                    source: Box::new(e),
                })
            })
            .collect()
    }
}
