use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{ArgGroup, Args};
use ganeye_core::landmarks::{detection_summary, load_landmark_file, read_landmarks};
use ganeye_core::metric::{
    self, calibrate as calibrate_eyes, is_candidate, observe, read_scores, score_record,
    sort_candidates, EyeObservation, DEFAULT_MIN_CALIBRATION_COUNT, DEFAULT_THRESHOLD,
};
use ganeye_core::synth::load_manifest;
use ganeye_core::{EyeCalibration, ScoreRecord};
use rayon::prelude::*;
use serde::Serialize;

use super::threshold_arg;
use crate::io::{write_json, Sink};

/// Records scored per parallel batch; bounds memory for huge inputs.
const BATCH: usize = 4096;

#[derive(Args)]
pub struct CalibrateArgs {
    /// Landmarks of a reference corpus of generated faces.
    #[arg(long)]
    pub landmarks: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MIN_CALIBRATION_COUNT)]
    pub min_count: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Free-text provenance stored in the calibration; defaults to the input path.
    #[arg(long)]
    pub source: Option<String>,
}

pub fn calibrate(args: CalibrateArgs) -> Result<()> {
    let records = load_landmark_file(&args.landmarks)?;
    let observations = records
        .iter()
        .map(observe)
        .collect::<ganeye_core::Result<Vec<EyeObservation>>>()?;
    let source = args
        .source
        .unwrap_or_else(|| args.landmarks.display().to_string());
    let outcome = calibrate_eyes(&observations, args.min_count, &source)?;
    if outcome.skipped > 0 {
        tracing::warn!(skipped = outcome.skipped, "reference images without exactly one face skipped");
    }
    write_json(&args.out, &outcome.calibration)?;
    tracing::info!(n_images = outcome.calibration.n_images, "calibration written");
    Ok(())
}

#[derive(Args)]
#[command(group(ArgGroup::new("dest").required(true).args(["out", "stdout"])))]
pub struct ScoreArgs {
    #[arg(long)]
    pub landmarks: PathBuf,
    #[arg(long)]
    pub calibration: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Stream records to standard output instead of a file.
    #[arg(long)]
    pub stdout: bool,
    /// Emit only candidates, sorted, as `filter` would.
    #[arg(long)]
    pub filter: bool,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD, value_parser = threshold_arg)]
    pub threshold: f64,
    #[arg(long)]
    pub jobs: Option<usize>,
}

pub fn score(args: ScoreArgs) -> Result<()> {
    let calibration = EyeCalibration::from_json_file(&args.calibration)?;
    let pool = super::pool(args.jobs)?;
    let file = File::open(&args.landmarks)
        .with_context(|| format!("opening {}", args.landmarks.display()))?;
    let mut records = read_landmarks(BufReader::new(file));
    let mut sink = Sink::open(args.out.as_deref(), args.stdout)?;
    let mut candidates = Vec::new();
    let mut n = 0usize;
    loop {
        let batch = records
            .by_ref()
            .take(BATCH)
            .collect::<ganeye_core::Result<Vec<_>>>()
            .with_context(|| format!("reading {}", args.landmarks.display()))?;
        if batch.is_empty() {
            break;
        }
        n += batch.len();
        let scored = pool.install(|| {
            batch
                .par_iter()
                .map(|(line, r)| {
                    score_record(r, &calibration)
                        .with_context(|| format!("{}: line {line}", args.landmarks.display()))
                })
                .collect::<Result<Vec<ScoreRecord>>>()
        })?;
        for s in scored {
            if !args.filter {
                sink.line(&s.to_json_line())?;
            } else if is_candidate(&s, args.threshold) {
                candidates.push(s);
            }
        }
    }
    if args.filter {
        sort_candidates(&mut candidates);
        for c in &candidates {
            sink.line(&c.to_json_line())?;
        }
        tracing::info!(scored = n, candidates = candidates.len(), "candidates written");
    } else {
        tracing::info!(scored = n, "scores written");
    }
    sink.finish()
}

#[derive(Args)]
#[command(group(ArgGroup::new("dest").required(true).args(["out", "stdout"])))]
pub struct FilterArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD, value_parser = threshold_arg)]
    pub threshold: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub stdout: bool,
}

pub fn filter(args: FilterArgs) -> Result<()> {
    let file =
        File::open(&args.scores).with_context(|| format!("opening {}", args.scores.display()))?;
    let mut n = 0usize;
    let mut candidates = Vec::new();
    for item in read_scores(BufReader::new(file)) {
        let (_, s) = item.with_context(|| format!("reading {}", args.scores.display()))?;
        n += 1;
        if is_candidate(&s, args.threshold) {
            candidates.push(s);
        }
    }
    sort_candidates(&mut candidates);
    let mut sink = Sink::open(args.out.as_deref(), args.stdout)?;
    for c in &candidates {
        sink.line(&c.to_json_line())?;
    }
    tracing::info!(scored = n, candidates = candidates.len(), "candidates written");
    sink.finish()
}

#[derive(Args)]
pub struct RecallArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD, value_parser = threshold_arg)]
    pub threshold: f64,
    /// Synthetic corpus manifest; reports the flag rate per class.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Default, Serialize)]
struct FlagRate {
    n: usize,
    flagged: usize,
    rate: Option<f64>,
}

impl FlagRate {
    fn add(&mut self, flagged: bool) {
        self.n += 1;
        self.flagged += usize::from(flagged);
    }

    fn finish(mut self) -> Self {
        self.rate = (self.n > 0).then(|| self.flagged as f64 / self.n as f64);
        self
    }
}

#[derive(Serialize)]
struct RecallReport {
    threshold: f64,
    overall: FlagRate,
    #[serde(skip_serializing_if = "Option::is_none")]
    per_class: Option<BTreeMap<String, FlagRate>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    unmatched: Option<usize>,
}

pub fn recall(args: RecallArgs) -> Result<()> {
    let scores = metric::load_score_file(&args.scores)?;
    if scores.is_empty() {
        return Err(ganeye_core::Error::InvalidInput(format!(
            "{} has no scores",
            args.scores.display()
        ))
        .into());
    }
    let mut overall = FlagRate::default();
    for s in &scores {
        overall.add(is_candidate(s, args.threshold));
    }
    let mut report = RecallReport {
        threshold: args.threshold,
        overall: overall.finish(),
        per_class: None,
        unmatched: None,
    };
    if let Some(path) = &args.manifest {
        let classes: HashMap<String, String> = load_manifest(path)?
            .into_iter()
            .map(|e| (e.image_id, e.class.to_string()))
            .collect();
        let mut per_class: BTreeMap<String, FlagRate> = BTreeMap::new();
        let mut unmatched = 0;
        for s in &scores {
            match classes.get(&s.image_id) {
                Some(c) => per_class.entry(c.clone()).or_default().add(is_candidate(s, args.threshold)),
                None => unmatched += 1,
            }
        }
        if unmatched > 0 {
            tracing::warn!(unmatched, "scored images missing from the manifest");
        }
        report.per_class = Some(per_class.into_iter().map(|(k, v)| (k, v.finish())).collect());
        report.unmatched = Some(unmatched);
    }
    write_json(&args.out, &report)
}

#[derive(Args)]
pub struct SummaryArgs {
    #[arg(long)]
    pub landmarks: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn summary(args: SummaryArgs) -> Result<()> {
    let records = load_landmark_file(&args.landmarks)?;
    write_json(&args.out, &detection_summary(&records)?)
}
