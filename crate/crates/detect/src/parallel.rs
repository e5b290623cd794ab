//! Worker fan-out. Results never depend on the worker count.

use gme_core::pipeline::{candidate, run_once, BuildStats, Dataset, DatasetBuilder, DatasetConfig, RunReport, TrainConfig};
use rayon::prelude::*;

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "GME_DETECT_THREADS";

pub fn thread_pool() -> rayon::ThreadPool {
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
}

/// Evaluates candidates in parallel chunks and offers them in index order,
/// which reproduces the serial result exactly.
pub fn build_dataset(cfg: &DatasetConfig, pool: &rayon::ThreadPool) -> gme_core::Result<(Dataset, BuildStats)> {
    let mut builder = DatasetBuilder::new(*cfg)?;
    let chunk = (4 * pool.current_num_threads()).max(8) as u64;
    while !builder.is_complete() {
        let range = builder.next_indices(chunk);
        let outcomes: Vec<_> = pool.install(|| range.into_par_iter().map(|i| candidate(cfg, i)).collect());
        for outcome in outcomes {
            if builder.is_complete() {
                break;
            }
            builder.offer(outcome?)?;
        }
    }
    builder.finish()
}

/// One training run per config, results in input order.
pub fn run_many(dataset: &Dataset, configs: &[TrainConfig], pool: &rayon::ThreadPool) -> Vec<gme_core::Result<RunReport>> {
    pool.install(|| configs.par_iter().map(|&cfg| run_once(dataset, cfg)).collect())
}
