use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::Result;
use clap::Args;
use ganeye_net::fetch::{fetch_images, load_fetch_manifest, FetchConfig};

use crate::io::{AtomicFile, Sink};

#[derive(Args)]
pub struct FetchArgs {
    /// CSV with columns image_id,url.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory the images are saved to, one file per image id.
    #[arg(long)]
    pub out: PathBuf,
    /// Requests started per second, retries included.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(1..))]
    pub rate: u32,
    #[arg(long, default_value_t = 2)]
    pub retries: u32,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 20.0)]
    pub timeout: f64,
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    pub concurrency: u64,
    /// JSONL log of per-image outcomes; defaults to `.fetch-log.jsonl` in the output directory.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

pub fn fetch(args: FetchArgs) -> Result<()> {
    if !(args.timeout.is_finite() && args.timeout > 0.0) {
        return Err(ganeye_core::Error::InvalidInput(format!(
            "timeout must be positive, got {}",
            args.timeout
        ))
        .into());
    }
    let entries = load_fetch_manifest(&args.manifest)?;
    let config = FetchConfig {
        rate_limit: args.rate,
        retries: args.retries,
        timeout: Duration::from_secs_f64(args.timeout),
        concurrency: args.concurrency as usize,
        ..FetchConfig::default()
    };
    let log = super::tokio_runtime()?.block_on(fetch_images(&entries, &args.out, &config))?;

    let log_path = args.log.unwrap_or_else(|| args.out.join(".fetch-log.jsonl"));
    let mut sink = Sink::File(AtomicFile::create(&log_path)?);
    let mut tally: BTreeMap<String, usize> = BTreeMap::new();
    for entry in &log {
        sink.line(&serde_json::to_string(entry)?)?;
        let status = serde_json::to_value(entry.status)?;
        *tally.entry(status.as_str().unwrap_or("?").to_string()).or_default() += 1;
    }
    sink.finish()?;
    for (status, n) in &tally {
        tracing::info!(status = %status, count = n, "fetch outcome");
    }
    Ok(())
}
