//! `ganeye`: a staged pipeline from profile images to candidate lists,
//! distribution statistics, annotation and prevalence reports.
//!
//! Every stage reads and writes files, so partial reruns are cheap. Data
//! only ever goes to the declared output files (or standard output with
//! `--stdout`); diagnostics go to standard error.
//!
//! Exit status: 0 on success, 1 for bad input or usage, 2 when the
//! filesystem, network or a detector subprocess fails.

mod commands;
mod io;

use std::io::IsTerminal;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};

use commands::{corpus, fetch, report, scoring, serve, stats};

#[derive(Parser)]
#[command(name = "ganeye", version, about = "Eye-placement triage of profile pictures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic marker corpus with known eye placement.
    Synth(corpus::SynthArgs),
    /// Produce a landmark file from images.
    Detect(corpus::DetectArgs),
    /// Average eye positions over a reference corpus of generated faces.
    Calibrate(scoring::CalibrateArgs),
    /// Score every landmark record against a calibration.
    Score(scoring::ScoreArgs),
    /// Keep the records scoring strictly below a threshold.
    Filter(scoring::FilterArgs),
    /// Fraction of scored images flagged, overall or per corpus class.
    Recall(scoring::RecallArgs),
    /// Face-count summary of a landmark file.
    Summary(scoring::SummaryArgs),
    /// Download images listed in a CSV manifest.
    Fetch(fetch::FetchArgs),
    /// Descriptive statistics, KS tests, histograms and densities.
    #[command(subcommand)]
    Stats(stats::StatsCommand),
    /// Prevalence bounds from consensus counts or a label log.
    Report(report::ReportArgs),
    /// Run the annotation service.
    Serve(serve::ServeArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Help and version requests are not errors.
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    init_logging();
    let outcome = match cli.command {
        Command::Synth(a) => corpus::synth(a),
        Command::Detect(a) => corpus::detect(a),
        Command::Calibrate(a) => scoring::calibrate(a),
        Command::Score(a) => scoring::score(a),
        Command::Filter(a) => scoring::filter(a),
        Command::Recall(a) => scoring::recall(a),
        Command::Summary(a) => scoring::summary(a),
        Command::Fetch(a) => fetch::fetch(a),
        Command::Stats(c) => stats::run(c),
        Command::Report(a) => report::report(a),
        Command::Serve(a) => serve::serve(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<ganeye_core::Error>() {
            return if err.is_environmental() { 2 } else { 1 };
        }
        if cause.is::<std::io::Error>() {
            return 2;
        }
    }
    1
}

fn init_logging() {
    let requested = std::env::var("GPT_LOG_LEVEL").ok();
    let level = match requested.as_deref() {
        Some(l @ ("error" | "warn" | "info" | "debug")) => {
            tracing::Level::from_str(l).expect("known level")
        }
        _ => tracing::Level::INFO,
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(level)
        .with_target(false)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
    if let Some(bad) = requested.filter(|l| !matches!(l.as_str(), "error" | "warn" | "info" | "debug")) {
        tracing::warn!("GPT_LOG_LEVEL={bad:?} not one of error, warn, info, debug; using info");
    }
}
