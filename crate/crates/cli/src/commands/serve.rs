use std::net::IpAddr;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use ganeye_core::annotation::{Durability, LabelStore, StatsConfig, StoreOptions};
use ganeye_core::metric::load_score_file;
use ganeye_net::server::{router, serve as run_server, AppState, ImageIndex};

#[derive(Args)]
pub struct ServeArgs {
    /// Candidate list produced by `filter`.
    #[arg(long)]
    pub candidates: PathBuf,
    /// Directory holding the candidate images.
    #[arg(long)]
    pub images: PathBuf,
    /// Append-only label log; created if absent, replayed if present.
    #[arg(long)]
    pub store: PathBuf,
    /// Static files for the labeling front end.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Sample size the candidates were drawn from; enables prevalence in /api/stats.
    #[arg(long)]
    pub n_sample: Option<u64>,
    /// Population to extrapolate prevalence to.
    #[arg(long)]
    pub base: Option<u64>,
    /// Shuffle the labeling queue deterministically instead of ordering by score.
    #[arg(long)]
    pub shuffle_seed: Option<u64>,
    /// fsync every label before acknowledging it.
    #[arg(long)]
    pub sync: bool,
}

pub fn serve(args: ServeArgs) -> Result<()> {
    let candidates = load_score_file(&args.candidates)?;
    let options = StoreOptions {
        shuffle_seed: args.shuffle_seed,
        durability: if args.sync { Durability::Sync } else { Durability::Flush },
    };
    let store = LabelStore::open(&candidates, &args.store, &options)?;
    let images = ImageIndex::scan(&args.images)?;
    let missing = store
        .candidates()
        .iter()
        .filter(|c| images.get(&c.image_id).is_none())
        .count();
    if missing > 0 {
        tracing::warn!(missing, "candidates without an image file");
    }
    tracing::info!(
        candidates = store.candidates().len(),
        labels = store.revision(),
        images = images.len(),
        "label store ready"
    );
    let stats = StatsConfig {
        n_sample: args.n_sample,
        extrapolation_base: args.base,
    };
    let app = router(AppState::new(store, images, stats), args.ui_dir.as_deref());

    super::tokio_runtime()?.block_on(async {
        let listener = tokio::net::TcpListener::bind((args.host, args.port))
            .await
            .with_context(|| format!("binding {}:{}", args.host, args.port))?;
        tracing::info!(addr = %listener.local_addr()?, "listening");
        run_server(listener, app).await.context("serving")
    })
}
