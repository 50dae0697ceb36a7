use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand, ValueEnum};
use ganeye_core::metric::load_score_file;
use ganeye_core::stats::{
    compare_groups, describe, histogram, kde_1d, kde_2d, ks_test, linspace, load_account_csv,
    silverman_bandwidth, uniform_edges,
};
use ganeye_core::{Error, NormPoint};
use serde_json::json;

use crate::io::{load_values, sidecar_path, write_json, AtomicFile};

#[derive(Subcommand)]
pub enum StatsCommand {
    /// Count, mean and sample standard deviation.
    Describe(DescribeArgs),
    /// Two-sample Kolmogorov-Smirnov test.
    Ks(KsArgs),
    /// Histogram counts as CSV.
    Hist(HistArgs),
    /// 1-D Gaussian kernel density on a grid, as CSV.
    Kde1d(Kde1dArgs),
    /// 2-D kernel density of eye positions over the unit square, as CSV.
    Kde2d(Kde2dArgs),
    /// Compare account characteristics between two groups.
    Profile(ProfileArgs),
}

/// A column of numbers: `--column` picks a CSV column or JSONL field,
/// otherwise the file holds one number per line.
#[derive(Args)]
pub struct Values {
    #[arg(long)]
    pub values: PathBuf,
    #[arg(long)]
    pub column: Option<String>,
}

impl Values {
    fn load(&self) -> Result<Vec<f64>> {
        load_values(&self.values, self.column.as_deref())
    }
}

#[derive(Args)]
pub struct DescribeArgs {
    #[command(flatten)]
    pub input: Values,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct KsArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    /// Column or field read from both files.
    #[arg(long)]
    pub column: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct HistArgs {
    #[command(flatten)]
    pub input: Values,
    /// Comma-separated bin edges.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["bins", "min", "max"])]
    pub edges: Option<Vec<f64>>,
    /// Number of equal-width bins between --min and --max.
    #[arg(long, requires_all = ["min", "max"])]
    pub bins: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub max: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct Kde1dArgs {
    #[command(flatten)]
    pub input: Values,
    /// Grid start; defaults to six bandwidths below the smallest value.
    #[arg(long, allow_negative_numbers = true)]
    pub min: Option<f64>,
    /// Grid end; defaults to six bandwidths above the largest value.
    #[arg(long, allow_negative_numbers = true)]
    pub max: Option<f64>,
    #[arg(long, default_value_t = 512)]
    pub points: usize,
    /// Kernel bandwidth; Silverman's rule when omitted.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Eye {
    Left,
    Right,
}

#[derive(Args)]
pub struct Kde2dArgs {
    /// Score file; single-face records contribute their eye center.
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long, value_enum)]
    pub eye: Eye,
    /// Grid nodes per axis over [0, 1].
    #[arg(long, default_value_t = 101)]
    pub points: usize,
    /// Per-axis bandwidths; Scott's rule when omitted.
    #[arg(long, requires = "bandwidth_y")]
    pub bandwidth_x: Option<f64>,
    #[arg(long, requires = "bandwidth_x")]
    pub bandwidth_y: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ProfileArgs {
    /// CSV with columns followers, friends, tweets, created_year.
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(command: StatsCommand) -> Result<()> {
    match command {
        StatsCommand::Describe(a) => write_json(&a.out, &describe(&a.input.load()?)?),
        StatsCommand::Ks(a) => {
            let xs = load_values(&a.a, a.column.as_deref())?;
            let ys = load_values(&a.b, a.column.as_deref())?;
            write_json(&a.out, &ks_test(&xs, &ys)?)
        }
        StatsCommand::Hist(a) => hist(a),
        StatsCommand::Kde1d(a) => kde1d(a),
        StatsCommand::Kde2d(a) => kde2d(a),
        StatsCommand::Profile(a) => {
            let ga = load_account_csv(&a.a)?;
            let gb = load_account_csv(&a.b)?;
            write_json(&a.out, &compare_groups(&ga, &gb)?)
        }
    }
}

fn write_csv_with_sidecar(
    out: &Path,
    sidecar: serde_json::Value,
    body: impl FnOnce(&mut AtomicFile) -> std::io::Result<()>,
) -> Result<()> {
    let mut f = AtomicFile::create(out)?;
    body(&mut f).with_context(|| format!("writing {}", out.display()))?;
    f.commit()?;
    write_json(&sidecar_path(out), &sidecar)
}

fn hist(a: HistArgs) -> Result<()> {
    let values = a.input.load()?;
    let edges = match (a.edges, a.bins, a.min, a.max) {
        (Some(edges), ..) => edges,
        (None, Some(bins), Some(min), Some(max)) => uniform_edges(min, max, bins)?,
        _ => bail!(Error::InvalidInput("give --edges, or --bins with --min and --max".into())),
    };
    let h = histogram(&values, &edges)?;
    let meta = json!({ "n": values.len(), "overflow": h.overflow });
    write_csv_with_sidecar(&a.out, meta, |w| h.write_csv(w))
}

fn kde1d(a: Kde1dArgs) -> Result<()> {
    let values = a.input.load()?;
    if a.points < 2 {
        bail!(Error::InvalidInput("--points must be at least 2".into()));
    }
    let (lo, hi) = match (a.min, a.max) {
        (Some(lo), Some(hi)) => (lo, hi),
        (min, max) => {
            let h = match a.bandwidth {
                Some(h) => h,
                None => silverman_bandwidth(&values)?,
            };
            let data_lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let data_hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (min.unwrap_or(data_lo - 6.0 * h), max.unwrap_or(data_hi + 6.0 * h))
        }
    };
    if lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
        bail!(Error::InvalidInput(format!("empty grid range [{lo}, {hi}]")));
    }
    let density = kde_1d(&values, &linspace(lo, hi, a.points), a.bandwidth)?;
    write_csv_with_sidecar(&a.out, density.sidecar(), |w| density.write_csv(w))
}

fn kde2d(a: Kde2dArgs) -> Result<()> {
    if a.points < 2 {
        bail!(Error::InvalidInput("--points must be at least 2".into()));
    }
    let points: Vec<NormPoint> = load_score_file(&a.scores)?
        .iter()
        .filter_map(|s| s.eyes)
        .map(|e| match a.eye {
            Eye::Left => e.left,
            Eye::Right => e.right,
        })
        .collect();
    let grid = linspace(0.0, 1.0, a.points);
    let bandwidths = a.bandwidth_x.zip(a.bandwidth_y);
    let density = kde_2d(&points, &grid, &grid, bandwidths)?;
    write_csv_with_sidecar(&a.out, density.sidecar(), |w| density.write_csv(w))
}
