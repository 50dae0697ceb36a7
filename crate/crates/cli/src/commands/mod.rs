pub mod corpus;
pub mod fetch;
pub mod report;
pub mod scoring;
pub mod serve;
pub mod stats;

use anyhow::{Context, Result};

/// Worker pool for the parallel stages; `None` uses one thread per core.
pub fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .context("starting worker threads")
}

pub fn threshold_arg(s: &str) -> Result<f64, String> {
    let t: f64 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    ganeye_core::metric::check_threshold(t).map_err(|e| e.to_string())?;
    Ok(t)
}

pub fn tokio_runtime() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting async runtime")
}
