//! Landmark records: the per-image output of a face detector, stored as
//! line-delimited JSON with pixel coordinates.
//!
//! ```text
//! {"image_id":"a","width":400,"height":400,"detector":"dlib",
//!  "faces":[{"left_eye":[[x,y],...],"right_eye":[[x,y],...]}]}
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PixelPoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceLandmarks {
    pub left_eye: Vec<PixelPoint>,
    pub right_eye: Vec<PixelPoint>,
}

impl FaceLandmarks {
    pub fn new(left_eye: Vec<PixelPoint>, right_eye: Vec<PixelPoint>) -> Self {
        Self {
            left_eye,
            right_eye,
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.left_eye.is_empty() {
            return Err("left_eye has no points".into());
        }
        if self.right_eye.is_empty() {
            return Err("right_eye has no points".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkRecord {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub detector: String,
    pub faces: Vec<FaceLandmarks>,
}

impl LandmarkRecord {
    /// A record for an image the provider could not process. Scores as
    /// "no face".
    pub fn failed(image_id: impl Into<String>, width: u32, height: u32, detector: &str) -> Self {
        Self {
            image_id: image_id.into(),
            width: width.max(1),
            height: height.max(1),
            detector: detector.to_string(),
            faces: Vec::new(),
        }
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.width == 0 || self.height == 0 {
            return Err(format!(
                "non-positive dimensions {}x{}",
                self.width, self.height
            ));
        }
        for (i, face) in self.faces.iter().enumerate() {
            face.validate().map_err(|e| format!("face {i}: {e}"))?;
        }
        Ok(())
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("landmark records always serialize")
    }
}

/// Parses one serialized record. `line_no` is 1-based and only used in
/// error messages.
pub fn parse_landmark_record(line: &str, line_no: usize) -> Result<LandmarkRecord> {
    let record: LandmarkRecord =
        serde_json::from_str(line.trim()).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
    record.validate().map_err(|message| Error::Parse {
        line: line_no,
        message,
    })?;
    Ok(record)
}

/// Streams records from a reader, skipping blank lines. Each item carries
/// its 1-based line number.
pub fn read_landmarks<R: BufRead>(
    reader: R,
) -> impl Iterator<Item = Result<(usize, LandmarkRecord)>> {
    reader
        .lines()
        .enumerate()
        .filter_map(|(i, line)| {
            let line_no = i + 1;
            match line {
                Err(e) => Some(Err(Error::io(format!("reading line {line_no}"), e))),
                Ok(l) if l.trim().is_empty() => None,
                Ok(l) => Some(parse_landmark_record(&l, line_no).map(|r| (line_no, r))),
            }
        })
}

/// Loads a whole landmark file, rejecting duplicate image ids.
pub fn load_landmark_file(path: &Path) -> Result<Vec<LandmarkRecord>> {
    let file = File::open(path).map_err(|e| Error::io_at(path, e))?;
    let mut records = Vec::new();
    let mut seen: HashMap<String, Vec<usize>> = HashMap::new();
    for item in read_landmarks(BufReader::new(file)) {
        let (line_no, record) = item.map_err(|e| match e {
            Error::Parse { line, message } => Error::Parse {
                line,
                message: format!("{}: {message}", path.display()),
            },
            other => other,
        })?;
        seen.entry(record.image_id.clone()).or_default().push(line_no);
        records.push(record);
    }
    check_duplicates(seen)?;
    Ok(records)
}

pub(crate) fn check_duplicates(seen: HashMap<String, Vec<usize>>) -> Result<()> {
    let mut dups: Vec<(String, Vec<usize>)> =
        seen.into_iter().filter(|(_, lines)| lines.len() > 1).collect();
    if dups.is_empty() {
        return Ok(());
    }
    dups.sort_by_key(|(_, lines)| lines[0]);
    let listing = dups
        .iter()
        .map(|(id, lines)| {
            let lines: Vec<String> = lines.iter().map(usize::to_string).collect();
            format!("{id} (lines {})", lines.join(", "))
        })
        .collect::<Vec<_>>()
        .join("; ");
    Err(Error::DuplicateIds(listing))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionSummary {
    pub n_records: usize,
    pub n_with_faces: usize,
    pub n_exactly_one: usize,
    pub frac_with_faces: f64,
    /// Among records with at least one face. Zero when no record has a face.
    pub frac_exactly_one_among_detected: f64,
}

pub fn detection_summary(records: &[LandmarkRecord]) -> Result<DetectionSummary> {
    if records.is_empty() {
        return Err(Error::invalid("detection summary needs at least one record"));
    }
    let n_with_faces = records.iter().filter(|r| r.n_faces() >= 1).count();
    let n_exactly_one = records.iter().filter(|r| r.n_faces() == 1).count();
    let frac_exactly_one_among_detected = if n_with_faces == 0 {
        0.0
    } else {
        n_exactly_one as f64 / n_with_faces as f64
    };
    Ok(DetectionSummary {
        n_records: records.len(),
        n_with_faces,
        n_exactly_one,
        frac_with_faces: n_with_faces as f64 / records.len() as f64,
        frac_exactly_one_among_detected,
    })
}
