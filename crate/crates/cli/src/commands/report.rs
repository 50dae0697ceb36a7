use std::collections::HashMap;
use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{ArgGroup, Args};
use ganeye_core::annotation::{
    cohen_kappa, consensus, prevalence_report, ConsensusCounts, LabelStore, StoreOptions, TweetTotals,
};
use ganeye_core::metric::load_score_file;
use ganeye_core::Error;
use serde::Deserialize;

use crate::io::{read_json, write_json};

#[derive(Args)]
#[command(group(ArgGroup::new("source").required(true).args(["counts", "labels"])))]
pub struct ReportArgs {
    /// Consensus counts as JSON:
    /// {"n_candidates","n_doubly_labeled","strict","loose"}.
    #[arg(long)]
    pub counts: Option<PathBuf>,
    /// Agreement to record alongside --counts.
    #[arg(long, requires = "counts", allow_negative_numbers = true)]
    pub kappa: Option<f64>,
    /// Label log to derive counts and kappa from.
    #[arg(long, requires = "candidates")]
    pub labels: Option<PathBuf>,
    /// Candidate list the labels refer to.
    #[arg(long, requires = "labels")]
    pub candidates: Option<PathBuf>,
    /// Size of the random sample the candidates came from.
    #[arg(long)]
    pub n_sample: u64,
    /// Population to extrapolate the rates to.
    #[arg(long)]
    pub base: Option<u64>,
    /// CSV of per-account tweet counts (image_id,tweets) for the tweet share.
    #[arg(long, requires_all = ["labels", "total_tweets"])]
    pub tweets: Option<PathBuf>,
    /// Total tweets posted by the whole sample.
    #[arg(long, requires = "tweets")]
    pub total_tweets: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Deserialize)]
struct TweetRow {
    image_id: String,
    tweets: u64,
}

pub fn report(args: ReportArgs) -> Result<()> {
    let report = if let Some(path) = &args.counts {
        let counts: ConsensusCounts = read_json(path)?;
        prevalence_report(&counts, args.n_sample, args.kappa, args.base, None)?
    } else {
        let labels = args.labels.as_deref().expect("group requires a source");
        let candidates = load_score_file(args.candidates.as_deref().expect("required with --labels"))?;
        let store = LabelStore::replay(&candidates, labels, &StoreOptions::default())?;
        let ids = store.candidates().iter().map(|c| c.image_id.as_str());
        let agreed = consensus(ids, store.current())?;
        if agreed.annotators.len() < 2 {
            tracing::warn!(annotators = agreed.annotators.len(), "fewer than two annotators have labeled");
        }
        let kappa = if agreed.pairs.len() >= 2 {
            Some(cohen_kappa(&agreed.pairs)?)
        } else {
            None
        };
        let tweets = match (&args.tweets, args.total_tweets) {
            (Some(path), Some(total)) => {
                let tallies = load_tweet_tallies(path)?;
                Some(TweetTotals::from_tallies(&agreed, &tallies, total)?)
            }
            _ => None,
        };
        prevalence_report(&agreed.counts, args.n_sample, kappa, args.base, tweets)?
    };
    tracing::info!(
        lower = %report.lower_percent,
        upper = %report.upper_percent,
        "prevalence report written"
    );
    write_json(&args.out, &report)
}

fn load_tweet_tallies(path: &std::path::Path) -> Result<HashMap<String, u64>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut tallies = HashMap::new();
    for row in reader.deserialize::<TweetRow>() {
        let row = row.map_err(|e| csv_error(path, e))?;
        if tallies.insert(row.image_id.clone(), row.tweets).is_some() {
            bail!(Error::DuplicateIds(format!("{} in {}", row.image_id, path.display())));
        }
    }
    Ok(tallies)
}

fn csv_error(path: &std::path::Path, e: csv::Error) -> anyhow::Error {
    if e.is_io_error() {
        let csv::ErrorKind::Io(io) = e.into_kind() else { unreachable!() };
        return anyhow::Error::new(io).context(format!("reading {}", path.display()));
    }
    Error::Parse {
        line: e.position().map_or(0, |p| p.line() as usize),
        message: format!("{}: {e}", path.display()),
    }
    .into()
}
