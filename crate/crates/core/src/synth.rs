//! Labeled synthetic corpora with controlled eye placement.
//!
//! Each image is a flat background with zero, one or two "faces", where a
//! face is a pure-red disk (left eye) and a pure-blue disk (right eye).
//! `gan_like` faces sit at fixed canonical positions plus small Gaussian
//! jitter; `human_like` faces are placed uniformly at random. The marker
//! detector in [`crate::detect::synthetic`] recovers the planted centers, so
//! the whole detect, calibrate, score, filter chain can be checked against
//! ground truth.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::synthetic::{BLUE, RED};
use crate::error::{Error, Result};
use crate::geometry::{NormPoint, PixelPoint};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const IMAGE_DIR: &str = "images";
const MAX_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaceClass {
    GanLike,
    HumanLike,
    NoFace,
    MultiFace,
}

impl FaceClass {
    pub const ALL: [FaceClass; 4] = [
        FaceClass::GanLike,
        FaceClass::HumanLike,
        FaceClass::NoFace,
        FaceClass::MultiFace,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FaceClass::GanLike => "gan_like",
            FaceClass::HumanLike => "human_like",
            FaceClass::NoFace => "no_face",
            FaceClass::MultiFace => "multi_face",
        }
    }

    pub fn planted_faces(self) -> usize {
        match self {
            FaceClass::GanLike | FaceClass::HumanLike => 1,
            FaceClass::NoFace => 0,
            FaceClass::MultiFace => 2,
        }
    }

    fn stream_base(self) -> u64 {
        (self as u64) << 32
    }
}

impl fmt::Display for FaceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub image_size: u32,
    pub canonical_left: NormPoint,
    pub canonical_right: NormPoint,
    pub jitter_sigma: f64,
    pub counts: BTreeMap<FaceClass, usize>,
    pub seed: u64,
    pub eye_radius: u32,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            image_size: 256,
            canonical_left: NormPoint::clamped(0.38, 0.45),
            canonical_right: NormPoint::clamped(0.62, 0.45),
            jitter_sigma: 0.002,
            counts: BTreeMap::new(),
            seed: 0,
            eye_radius: 5,
        }
    }
}

impl SyntheticSpec {
    pub fn with_counts(mut self, counts: &[(FaceClass, usize)]) -> Self {
        self.counts = counts.iter().copied().collect();
        self
    }

    pub fn count(&self, class: FaceClass) -> usize {
        self.counts.get(&class).copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size < 32 {
            return Err(Error::invalid(format!(
                "image_size must be at least 32, got {}",
                self.image_size
            )));
        }
        if self.eye_radius < 3 {
            return Err(Error::invalid(format!(
                "eye_radius must be at least 3, got {}",
                self.eye_radius
            )));
        }
        if !(self.jitter_sigma.is_finite() && self.jitter_sigma >= 0.0) {
            return Err(Error::invalid(format!(
                "jitter_sigma must be finite and non-negative, got {}",
                self.jitter_sigma
            )));
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        let spec: SyntheticSpec = serde_json::from_str(&text)
            .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifestEntry {
    pub image_id: String,
    pub class: FaceClass,
    /// Relative to the corpus directory, `/`-separated.
    pub path: String,
    /// Planted eye centers in pixels: left then right, per face.
    pub eyes: Vec<PixelPoint>,
}

/// The generator for image `index` of `class`. Independent per image, so
/// corpora can be generated in parallel and adding images of one class
/// leaves the others unchanged.
pub fn image_rng(seed: u64, class: FaceClass, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(class.stream_base() | index as u64);
    rng
}

pub fn image_id(class: FaceClass, index: usize) -> String {
    format!("{class}_{index:05}")
}

pub fn generate_image<R: Rng>(
    class: FaceClass,
    spec: &SyntheticSpec,
    rng: &mut R,
) -> Result<(RgbImage, Vec<PixelPoint>)> {
    spec.validate()?;
    let background = Rgb([
        rng.random_range(40..=215),
        rng.random_range(40..=215),
        rng.random_range(40..=215),
    ]);
    let mut img = RgbImage::from_pixel(spec.image_size, spec.image_size, background);

    let centers = match class {
        FaceClass::NoFace => Vec::new(),
        _ => place_markers(class, spec, rng)?,
    };
    let r = f64::from(spec.eye_radius);
    for (i, c) in centers.iter().enumerate() {
        draw_disk(&mut img, *c, r, if i % 2 == 0 { RED } else { BLUE });
    }
    Ok((img, centers))
}

fn place_markers<R: Rng>(
    class: FaceClass,
    spec: &SyntheticSpec,
    rng: &mut R,
) -> Result<Vec<PixelPoint>> {
    let size = f64::from(spec.image_size);
    let jitter = Normal::new(0.0, spec.jitter_sigma)
        .map_err(|e| Error::invalid(format!("jitter_sigma: {e}")))?;
    let px = |x: f64, y: f64| PixelPoint::new(x * size, y * size);

    for _ in 0..MAX_ATTEMPTS {
        let centers = match class {
            FaceClass::GanLike => {
                let (l, r) = (spec.canonical_left, spec.canonical_right);
                vec![
                    px(l.x() + jitter.sample(rng), l.y() + jitter.sample(rng)),
                    px(r.x() + jitter.sample(rng), r.y() + jitter.sample(rng)),
                ]
            }
            FaceClass::HumanLike => {
                // Both eyes inside the central 80% of the frame.
                let spacing = rng.random_range(0.15..=0.45);
                let lx = rng.random_range(0.1..=0.9 - spacing);
                let y = rng.random_range(0.1..=0.9);
                vec![px(lx, y), px(lx + spacing, y)]
            }
            FaceClass::MultiFace => {
                // One face in the top band, one in the bottom band. The gap
                // between bands exceeds any in-face spacing, so nearest-marker
                // pairing recovers the faces.
                let mut out = Vec::with_capacity(4);
                for (y_lo, y_hi) in [(0.1, 0.3), (0.7, 0.9)] {
                    let spacing = rng.random_range(0.15..=0.3);
                    let lx = rng.random_range(0.1..=0.9 - spacing);
                    let y = rng.random_range(y_lo..=y_hi);
                    out.push(px(lx, y));
                    out.push(px(lx + spacing, y));
                }
                out
            }
            FaceClass::NoFace => Vec::new(),
        };
        if markers_fit(&centers, spec) {
            return Ok(centers);
        }
    }
    Err(Error::Generation(format!(
        "could not place non-overlapping in-frame markers for a {class} image after {MAX_ATTEMPTS} attempts"
    )))
}

/// Every disk inside the frame and no two disks touching, even diagonally.
fn markers_fit(centers: &[PixelPoint], spec: &SyntheticSpec) -> bool {
    let r = f64::from(spec.eye_radius);
    let max = f64::from(spec.image_size - 1);
    let inside = centers
        .iter()
        .all(|c| c.x - r >= 0.0 && c.y - r >= 0.0 && c.x + r <= max && c.y + r <= max);
    let apart = centers.iter().enumerate().all(|(i, a)| {
        centers[i + 1..]
            .iter()
            .all(|b| (a.x - b.x).hypot(a.y - b.y) >= 2.0 * r + 2.0)
    });
    inside && apart
}

fn draw_disk(img: &mut RgbImage, center: PixelPoint, radius: f64, color: Rgb<u8>) {
    let (w, h) = img.dimensions();
    let x0 = (center.x - radius).floor().max(0.0) as u32;
    let y0 = (center.y - radius).floor().max(0.0) as u32;
    let x1 = ((center.x + radius).ceil() as u32).min(w - 1);
    let y1 = ((center.y + radius).ceil() as u32).min(h - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (dx, dy) = (f64::from(x) - center.x, f64::from(y) - center.y);
            if dx * dx + dy * dy <= radius * radius {
                img.put_pixel(x, y, color);
            }
        }
    }
}

/// Writes `counts[c]` PNG images per class under `out_dir/images/` plus
/// `out_dir/manifest.jsonl`, and returns the manifest.
pub fn generate_corpus(spec: &SyntheticSpec, out_dir: &Path) -> Result<Vec<CorpusManifestEntry>> {
    spec.validate()?;
    let image_dir = out_dir.join(IMAGE_DIR);
    fs::create_dir_all(&image_dir).map_err(|e| Error::io_at(&image_dir, e))?;

    let jobs: Vec<(FaceClass, usize)> = FaceClass::ALL
        .iter()
        .flat_map(|&class| (0..spec.count(class)).map(move |i| (class, i)))
        .collect();

    let manifest = jobs
        .par_iter()
        .map(|&(class, index)| {
            let id = image_id(class, index);
            let mut rng = image_rng(spec.seed, class, index);
            let (img, eyes) = generate_image(class, spec, &mut rng)
                .map_err(|e| Error::Generation(format!("{id}: {e}")))?;
            let rel = format!("{IMAGE_DIR}/{id}.png");
            let path = out_dir.join(&rel);
            img.save_with_format(&path, image::ImageFormat::Png)
                .map_err(|e| Error::Generation(format!("{id}: writing {}: {e}", path.display())))?;
            Ok(CorpusManifestEntry {
                image_id: id,
                class,
                path: rel,
                eyes,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest_path = out_dir.join(MANIFEST_FILE);
    let file = File::create(&manifest_path).map_err(|e| Error::io_at(&manifest_path, e))?;
    let mut w = BufWriter::new(file);
    for entry in &manifest {
        let line = serde_json::to_string(entry).expect("manifest entries always serialize");
        writeln!(w, "{line}").map_err(|e| Error::io_at(&manifest_path, e))?;
    }
    w.flush().map_err(|e| Error::io_at(&manifest_path, e))?;
    Ok(manifest)
}

pub fn load_manifest(path: &Path) -> Result<Vec<CorpusManifestEntry>> {
    let file = File::open(path).map_err(|e| Error::io_at(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io_at(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
