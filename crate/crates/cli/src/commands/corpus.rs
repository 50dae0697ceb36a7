use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use ganeye_core::detect::{detect_synthetic_file, probe_dimensions, ExternalDetector};
use ganeye_core::landmarks::{detection_summary, load_landmark_file};
use ganeye_core::synth::{generate_corpus, SyntheticSpec};
use ganeye_core::{Error, LandmarkRecord};
use rayon::prelude::*;

use crate::io::{AtomicFile, Sink};

#[derive(Args)]
pub struct SynthArgs {
    /// JSON corpus recipe; omitted fields take their defaults.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the recipe's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let mut spec = SyntheticSpec::from_json_file(&args.spec)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let manifest = generate_corpus(&spec, &args.out)?;
    tracing::info!(images = manifest.len(), out = %args.out.display(), "corpus written");
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Provider {
    /// Precomputed landmark file (`--landmarks`).
    File,
    /// External detector process (`--command`).
    Exec,
    /// Built-in detector for synthetic marker images.
    Synthetic,
}

#[derive(Args)]
pub struct DetectArgs {
    #[arg(long, value_enum)]
    pub provider: Provider,
    /// Detector command line, split on whitespace.
    #[arg(long, required_if_eq("provider", "exec"))]
    pub command: Option<String>,
    /// Precomputed landmarks for the `file` provider.
    #[arg(long, required_if_eq("provider", "file"))]
    pub landmarks: Option<PathBuf>,
    /// Image directory; image ids are file names without extension.
    #[arg(long, required_if_eq_any([("provider", "exec"), ("provider", "synthetic")]))]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Seconds the external detector may spend on one image.
    #[arg(long, default_value_t = 30.0)]
    pub timeout: f64,
    #[arg(long)]
    pub jobs: Option<usize>,
}

/// Non-hidden regular files in `dir`, sorted by name, keyed by file stem.
pub fn list_images(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let entries =
        std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.with_context(|| format!("listing {}", dir.display()))?;
        let path = entry.path();
        let name = entry.file_name();
        let Some(name) = name.to_str() else {
            tracing::warn!(path = %path.display(), "skipping non-UTF-8 file name");
            continue;
        };
        if name.starts_with('.') || !entry.file_type()?.is_file() {
            continue;
        }
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or(name)
            .to_string();
        files.push((stem, path));
    }
    files.sort_by(|a, b| a.1.cmp(&b.1));

    let mut seen: HashMap<&str, &Path> = HashMap::new();
    let mut clashes = Vec::new();
    for (id, path) in &files {
        if let Some(prev) = seen.insert(id, path) {
            clashes.push(format!("{id} ({} and {})", prev.display(), path.display()));
        }
    }
    if !clashes.is_empty() {
        return Err(Error::DuplicateIds(clashes.join("; ")).into());
    }
    Ok(files)
}

pub fn detect(args: DetectArgs) -> Result<()> {
    let records = match args.provider {
        Provider::Synthetic => {
            let images = list_images(args.images.as_deref().expect("required by clap"))?;
            super::pool(args.jobs)?.install(|| {
                images
                    .par_iter()
                    .map(|(id, path)| detect_synthetic_file(path, id))
                    .collect::<Vec<_>>()
            })
        }
        Provider::Exec => {
            if !(args.timeout.is_finite() && args.timeout > 0.0) {
                bail!(Error::InvalidInput(format!("timeout must be positive, got {}", args.timeout)));
            }
            let images = list_images(args.images.as_deref().expect("required by clap"))?;
            let detector = ExternalDetector::from_command_line(
                args.command.as_deref().expect("required by clap"),
                Duration::from_secs_f64(args.timeout),
            )?;
            let paths: Vec<PathBuf> = images.iter().map(|(_, p)| p.clone()).collect();
            let mut records = detector.run(&paths)?;
            for (record, (id, _)) in records.iter_mut().zip(&images) {
                record.image_id = id.clone();
            }
            records
        }
        Provider::File => {
            let records = load_landmark_file(args.landmarks.as_deref().expect("required by clap"))?;
            match &args.images {
                None => records,
                Some(dir) => align_to_images(records, &list_images(dir)?),
            }
        }
    };

    let mut out = Sink::File(AtomicFile::create(&args.out)?);
    for r in &records {
        out.line(&r.to_json_line())?;
    }
    out.finish()?;
    if let Ok(s) = detection_summary(&records) {
        tracing::info!(
            records = s.n_records,
            with_faces = s.n_with_faces,
            exactly_one = s.n_exactly_one,
            "landmarks written"
        );
    }
    Ok(())
}

/// One record per image, in image order. Images the file does not cover are
/// recorded faceless; records for absent images are dropped.
fn align_to_images(records: Vec<LandmarkRecord>, images: &[(String, PathBuf)]) -> Vec<LandmarkRecord> {
    let mut by_id: HashMap<String, LandmarkRecord> =
        records.into_iter().map(|r| (r.image_id.clone(), r)).collect();
    let aligned: Vec<LandmarkRecord> = images
        .iter()
        .map(|(id, path)| {
            by_id.remove(id).unwrap_or_else(|| {
                tracing::warn!(image_id = %id, "no landmarks for image, recording zero faces");
                let (w, h) = probe_dimensions(path).unwrap_or((1, 1));
                LandmarkRecord::failed(id.as_str(), w, h, "missing")
            })
        })
        .collect();
    if !by_id.is_empty() {
        tracing::warn!(count = by_id.len(), "landmark records without a matching image dropped");
    }
    aligned
}
