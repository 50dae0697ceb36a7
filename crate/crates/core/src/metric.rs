//! The eye-distance metric.
//!
//! GAN face generators place the eyes at nearly the same normalized position
//! in every image. A single-face image is scored by how far its two eye
//! centers sit from the reference positions:
//!
//! ```text
//! g = (|L - L_ref| + |R - R_ref|) / (2 * sqrt(2))     if exactly one face
//! g = 1                                               otherwise
//! ```
//!
//! Every coordinate lies in the unit square, so each distance is at most
//! `sqrt(2)` and `g` stays within `[0, 1]`. Small `g` only means "eyes where
//! a generator would put them"; it is a high-recall pre-filter for human
//! review, not a verdict.

use std::collections::HashMap;
use std::f64::consts::SQRT_2;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{eye_center, normalize_point, EyePair, NormPoint};
use crate::landmarks::{check_duplicates, LandmarkRecord};

pub const DEFAULT_THRESHOLD: f64 = 0.02;
pub const DEFAULT_MIN_CALIBRATION_COUNT: usize = 10;

/// Reference eye positions averaged over a corpus of known generated faces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CalibrationFile")]
pub struct EyeCalibration {
    pub left: NormPoint,
    pub right: NormPoint,
    pub n_images: usize,
    pub source: String,
}

#[derive(Deserialize)]
struct CalibrationFile {
    left: NormPoint,
    right: NormPoint,
    n_images: usize,
    source: String,
}

impl TryFrom<CalibrationFile> for EyeCalibration {
    type Error = String;

    fn try_from(f: CalibrationFile) -> std::result::Result<Self, String> {
        if f.n_images == 0 {
            return Err("calibration must be averaged over at least one image".into());
        }
        Ok(EyeCalibration {
            left: f.left,
            right: f.right,
            n_images: f.n_images,
            source: f.source,
        })
    }
}

impl EyeCalibration {
    pub fn eyes(&self) -> EyePair {
        EyePair::new(self.left, self.right)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line(),
            message: format!("{}: {e}", path.display()),
        })
    }
}

/// Normalized eye centers extracted from one landmark record. `eyes` is
/// present only when exactly one face was detected.
#[derive(Debug, Clone, PartialEq)]
pub struct EyeObservation {
    pub image_id: String,
    pub n_faces: usize,
    pub eyes: Option<EyePair>,
}

pub fn observe(record: &LandmarkRecord) -> Result<EyeObservation> {
    let eyes = match record.faces.as_slice() {
        [face] => {
            let left = eye_center(&face.left_eye)?;
            let right = eye_center(&face.right_eye)?;
            Some(EyePair::new(
                normalize_point(left, record.width, record.height)?,
                normalize_point(right, record.width, record.height)?,
            ))
        }
        _ => None,
    };
    Ok(EyeObservation {
        image_id: record.image_id.clone(),
        n_faces: record.n_faces(),
        eyes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScoreLine", into = "ScoreLine")]
pub struct ScoreRecord {
    pub image_id: String,
    pub n_faces: usize,
    pub eyes: Option<EyePair>,
    pub g: f64,
}

#[derive(Serialize, Deserialize)]
struct ScoreLine {
    image_id: String,
    n_faces: usize,
    g: f64,
    left: Option<NormPoint>,
    right: Option<NormPoint>,
}

impl From<ScoreRecord> for ScoreLine {
    fn from(r: ScoreRecord) -> Self {
        ScoreLine {
            image_id: r.image_id,
            n_faces: r.n_faces,
            g: r.g,
            left: r.eyes.map(|e| e.left),
            right: r.eyes.map(|e| e.right),
        }
    }
}

impl TryFrom<ScoreLine> for ScoreRecord {
    type Error = String;

    fn try_from(l: ScoreLine) -> std::result::Result<Self, String> {
        let eyes = match (l.left, l.right) {
            (Some(left), Some(right)) => Some(EyePair::new(left, right)),
            (None, None) => None,
            _ => return Err("left and right must both be present or both be null".into()),
        };
        let record = ScoreRecord {
            image_id: l.image_id,
            n_faces: l.n_faces,
            eyes,
            g: l.g,
        };
        record.validate()?;
        Ok(record)
    }
}

impl ScoreRecord {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(0.0..=1.0).contains(&self.g) {
            return Err(format!("g = {} outside [0, 1]", self.g));
        }
        if self.n_faces == 1 && self.eyes.is_none() {
            return Err("single-face record without eye centers".into());
        }
        if self.n_faces != 1 {
            if self.eyes.is_some() {
                return Err(format!("{} faces but eye centers present", self.n_faces));
            }
            if self.g != 1.0 {
                return Err(format!("{} faces requires g = 1, got {}", self.n_faces, self.g));
            }
        }
        Ok(())
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("score records always serialize")
    }
}

pub fn parse_score_record(line: &str, line_no: usize) -> Result<ScoreRecord> {
    serde_json::from_str(line.trim()).map_err(|e| Error::Parse {
        line: line_no,
        message: e.to_string(),
    })
}

/// Streams score records, skipping blank lines.
pub fn read_scores<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, ScoreRecord)>> {
    reader.lines().enumerate().filter_map(|(i, line)| {
        let line_no = i + 1;
        match line {
            Err(e) => Some(Err(Error::io(format!("reading line {line_no}"), e))),
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some(parse_score_record(&l, line_no).map(|r| (line_no, r))),
        }
    })
}

/// Loads a whole score (or candidate) file, rejecting duplicate image ids.
pub fn load_score_file(path: &Path) -> Result<Vec<ScoreRecord>> {
    let file = File::open(path).map_err(|e| Error::io_at(path, e))?;
    let mut records = Vec::new();
    let mut seen: HashMap<String, Vec<usize>> = HashMap::new();
    for item in read_scores(BufReader::new(file)) {
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

pub fn gan_eye_distance(
    n_faces: usize,
    eyes: Option<&EyePair>,
    cal: &EyeCalibration,
) -> Result<f64> {
    match (n_faces, eyes) {
        (1, Some(e)) => {
            let d = e.left.distance(&cal.left) + e.right.distance(&cal.right);
            Ok((d / (2.0 * SQRT_2)).min(1.0))
        }
        (1, None) => Err(Error::Contract(
            "one face detected but no eye centers supplied".into(),
        )),
        (n, Some(_)) => Err(Error::Contract(format!(
            "eye centers supplied for an image with {n} faces"
        ))),
        (_, None) => Ok(1.0),
    }
}

pub fn score(obs: &EyeObservation, cal: &EyeCalibration) -> Result<ScoreRecord> {
    let g = gan_eye_distance(obs.n_faces, obs.eyes.as_ref(), cal)?;
    Ok(ScoreRecord {
        image_id: obs.image_id.clone(),
        n_faces: obs.n_faces,
        eyes: obs.eyes,
        g,
    })
}

pub fn score_record(record: &LandmarkRecord, cal: &EyeCalibration) -> Result<ScoreRecord> {
    score(&observe(record)?, cal)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationOutcome {
    pub calibration: EyeCalibration,
    /// Reference images skipped because they did not show exactly one face.
    pub skipped: usize,
}

/// Averages the normalized eye centers of every single-face observation.
pub fn calibrate(
    observations: &[EyeObservation],
    min_count: usize,
    source: &str,
) -> Result<CalibrationOutcome> {
    let usable: Vec<&EyePair> = observations
        .iter()
        .filter(|o| o.n_faces == 1)
        .filter_map(|o| o.eyes.as_ref())
        .collect();
    let skipped = observations.len() - usable.len();
    let required = min_count.max(1);
    if usable.len() < required {
        return Err(Error::Calibration(format!(
            "need at least {required} single-face reference images, found {} ({} short; {skipped} skipped)",
            usable.len(),
            required - usable.len()
        )));
    }
    let n = usable.len() as f64;
    let mut sums = [0.0f64; 4];
    for e in &usable {
        sums[0] += e.left.x();
        sums[1] += e.left.y();
        sums[2] += e.right.x();
        sums[3] += e.right.y();
    }
    let calibration = EyeCalibration {
        left: NormPoint::clamped(sums[0] / n, sums[1] / n),
        right: NormPoint::clamped(sums[2] / n, sums[3] / n),
        n_images: usable.len(),
        source: source.to_string(),
    };
    Ok(CalibrationOutcome {
        calibration,
        skipped,
    })
}

pub fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "threshold must lie in (0, 1], got {threshold}"
        )))
    }
}

pub fn is_candidate(score: &ScoreRecord, threshold: f64) -> bool {
    score.g < threshold
}

/// Ascending `g`, ties broken by image id.
pub fn sort_candidates(candidates: &mut [ScoreRecord]) {
    candidates.sort_by(|a, b| a.g.total_cmp(&b.g).then_with(|| a.image_id.cmp(&b.image_id)));
}

pub fn filter_candidates(scores: &[ScoreRecord], threshold: f64) -> Result<Vec<ScoreRecord>> {
    check_threshold(threshold)?;
    let mut out: Vec<ScoreRecord> = scores
        .iter()
        .filter(|s| is_candidate(s, threshold))
        .cloned()
        .collect();
    sort_candidates(&mut out);
    Ok(out)
}

/// Fraction of known-positive records that fall below the threshold.
pub fn recall_at(scores: &[ScoreRecord], threshold: f64) -> Result<f64> {
    check_threshold(threshold)?;
    if scores.is_empty() {
        return Err(Error::invalid("recall needs at least one known-positive score"));
    }
    let hits = scores.iter().filter(|s| is_candidate(s, threshold)).count();
    Ok(hits as f64 / scores.len() as f64)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::geometry::PixelPoint;
    use crate::landmarks::FaceLandmarks;

    fn np(x: f64, y: f64) -> NormPoint {
        NormPoint::new(x, y).unwrap()
    }

    fn cal(l: (f64, f64), r: (f64, f64)) -> EyeCalibration {
        EyeCalibration {
            left: np(l.0, l.1),
            right: np(r.0, r.1),
            n_images: 10,
            source: "test".into(),
        }
    }

    fn scored(id: &str, g: f64) -> ScoreRecord {
        ScoreRecord {
            image_id: id.into(),
            n_faces: 1,
            eyes: Some(EyePair::new(np(0.4, 0.4), np(0.6, 0.4))),
            g,
        }
    }

    fn obs(id: &str, eyes: Option<((f64, f64), (f64, f64))>) -> EyeObservation {
        EyeObservation {
            image_id: id.into(),
            n_faces: usize::from(eyes.is_some()),
            eyes: eyes.map(|(l, r)| EyePair::new(np(l.0, l.1), np(r.0, r.1))),
        }
    }

    #[test]
    fn zero_at_calibration() {
        let c = cal((0.38, 0.45), (0.62, 0.45));
        assert_eq!(gan_eye_distance(1, Some(&c.eyes()), &c).unwrap(), 0.0);
    }

    #[test]
    fn one_when_not_exactly_one_face() {
        let c = cal((0.38, 0.45), (0.62, 0.45));
        assert_eq!(gan_eye_distance(0, None, &c).unwrap(), 1.0);
        assert_eq!(gan_eye_distance(2, None, &c).unwrap(), 1.0);
    }

    #[test]
    fn right_eye_displaced_vertically() {
        // 0.07 / (2 sqrt 2) = 0.02474873734152916...
        let c = cal((0.38, 0.45), (0.62, 0.45));
        let e = EyePair::new(np(0.38, 0.45), np(0.62, 0.52));
        let g = gan_eye_distance(1, Some(&e), &c).unwrap();
        assert!((g - 0.024_748_737_341_529_16).abs() < 1e-12, "{g}");
    }

    #[test]
    fn contract_violations() {
        let c = cal((0.38, 0.45), (0.62, 0.45));
        assert!(matches!(gan_eye_distance(1, None, &c), Err(Error::Contract(_))));
        assert!(matches!(
            gan_eye_distance(2, Some(&c.eyes()), &c),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn opposite_corners_give_one() {
        let c = cal((0.0, 0.0), (1.0, 1.0));
        let e = EyePair::new(np(1.0, 1.0), np(0.0, 0.0));
        assert_eq!(gan_eye_distance(1, Some(&e), &c).unwrap(), 1.0);
    }

    #[test]
    fn calibrate_single_record() {
        let out = calibrate(&[obs("a", Some(((0.3, 0.4), (0.7, 0.4))))], 1, "ref").unwrap();
        assert_eq!(out.calibration.left, np(0.3, 0.4));
        assert_eq!(out.calibration.right, np(0.7, 0.4));
        assert_eq!(out.calibration.n_images, 1);
        assert_eq!(out.skipped, 0);
    }

    #[test]
    fn calibrate_two_records() {
        let out = calibrate(
            &[
                obs("a", Some(((0.3, 0.4), (0.7, 0.4)))),
                obs("b", Some(((0.5, 0.4), (0.7, 0.4)))),
            ],
            1,
            "ref",
        )
        .unwrap();
        assert!((out.calibration.left.x() - 0.4).abs() < 1e-15);
        assert_eq!(out.calibration.left.y(), 0.4);
    }

    #[test]
    fn calibrate_skips_faceless_records() {
        let out = calibrate(
            &[
                obs("a", Some(((0.2, 0.4), (0.6, 0.5)))),
                obs("b", None),
                obs("c", Some(((0.4, 0.6), (0.8, 0.3)))),
            ],
            2,
            "ref",
        )
        .unwrap();
        // (0.2 + 0.4) / 2, (0.4 + 0.6) / 2, (0.6 + 0.8) / 2, (0.5 + 0.3) / 2
        let c = &out.calibration;
        assert!((c.left.x() - 0.3).abs() < 1e-15);
        assert!((c.left.y() - 0.5).abs() < 1e-15);
        assert!((c.right.x() - 0.7).abs() < 1e-15);
        assert!((c.right.y() - 0.4).abs() < 1e-15);
        assert_eq!(c.n_images, 2);
        assert_eq!(out.skipped, 1);
    }

    #[test]
    fn calibrate_reports_shortfall() {
        let records: Vec<_> = (0..7)
            .map(|i| obs(&i.to_string(), Some(((0.3, 0.4), (0.7, 0.4)))))
            .collect();
        let err = calibrate(&records, DEFAULT_MIN_CALIBRATION_COUNT, "ref").unwrap_err();
        match err {
            Error::Calibration(msg) => assert!(msg.contains("3 short"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn filter_examples() {
        let out = filter_candidates(&[scored("a", 0.01), scored("b", 0.5)], 0.02).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].image_id, "a");
        assert!(filter_candidates(&[scored("c", 0.02)], 0.02).unwrap().is_empty());
        assert!(filter_candidates(&[], 0.02).unwrap().is_empty());
    }

    #[test]
    fn filter_sorts_and_breaks_ties_by_id() {
        let out = filter_candidates(
            &[scored("z", 0.01), scored("b", 0.005), scored("a", 0.01)],
            0.02,
        )
        .unwrap();
        let ids: Vec<_> = out.iter().map(|s| s.image_id.as_str()).collect();
        assert_eq!(ids, ["b", "a", "z"]);
    }

    #[test]
    fn threshold_range_checked() {
        assert!(filter_candidates(&[], 0.0).is_err());
        assert!(filter_candidates(&[], 1.5).is_err());
        assert!(filter_candidates(&[], f64::NAN).is_err());
        assert!(filter_candidates(&[], 1.0).is_ok());
    }

    #[test]
    fn recall_examples() {
        let zeros: Vec<_> = (0..5).map(|i| scored(&i.to_string(), 0.0)).collect();
        assert_eq!(recall_at(&zeros, 0.001).unwrap(), 1.0);
        assert_eq!(
            recall_at(&[scored("a", 0.01), scored("b", 0.03)], 0.02).unwrap(),
            0.5
        );
        assert!(recall_at(&[], 0.02).is_err());
    }

    #[test]
    fn score_line_format() {
        let r = ScoreRecord {
            image_id: "x".into(),
            n_faces: 0,
            eyes: None,
            g: 1.0,
        };
        assert_eq!(
            r.to_json_line(),
            r#"{"image_id":"x","n_faces":0,"g":1.0,"left":null,"right":null}"#
        );
        let back: ScoreRecord = serde_json::from_str(&scored("y", 0.012345678901).to_json_line()).unwrap();
        assert_eq!(back.g, 0.012345678901);
        assert!(serde_json::from_str::<ScoreRecord>(
            r#"{"image_id":"x","n_faces":2,"g":0.5,"left":null,"right":null}"#
        )
        .is_err());
    }

    #[test]
    fn calibration_file_format() {
        let c = cal((0.38, 0.45), (0.62, 0.45));
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(
            text,
            r#"{"left":[0.38,0.45],"right":[0.62,0.45],"n_images":10,"source":"test"}"#
        );
        assert_eq!(serde_json::from_str::<EyeCalibration>(&text).unwrap(), c);
        assert!(serde_json::from_str::<EyeCalibration>(
            r#"{"left":[0.38,0.45],"right":[0.62,0.45],"n_images":0,"source":"x"}"#
        )
        .is_err());
    }

    fn landmark(width: u32, height: u32, left: (f64, f64), right: (f64, f64)) -> LandmarkRecord {
        // Six points around each center, like a 68-point detector's eye contour.
        let ring = |(cx, cy): (f64, f64)| {
            [(-6.0, 0.0), (-3.0, -2.0), (3.0, -2.0), (6.0, 0.0), (3.0, 2.0), (-3.0, 2.0)]
                .iter()
                .map(|(dx, dy)| PixelPoint::new(cx + dx, cy + dy))
                .collect()
        };
        LandmarkRecord {
            image_id: "img".into(),
            width,
            height,
            detector: "test".into(),
            faces: vec![FaceLandmarks::new(ring(left), ring(right))],
        }
    }

    #[test]
    fn observe_averages_and_normalizes() {
        let o = observe(&landmark(400, 400, (152.0, 180.0), (248.0, 180.0))).unwrap();
        let e = o.eyes.unwrap();
        assert!((e.left.x() - 0.38).abs() < 1e-15);
        assert!((e.left.y() - 0.45).abs() < 1e-15);
        assert!((e.right.x() - 0.62).abs() < 1e-15);
    }

    fn arb_unit() -> impl Strategy<Value = NormPoint> {
        (0.0f64..=1.0, 0.0f64..=1.0).prop_map(|(x, y)| np(x, y))
    }

    proptest! {
        #[test]
        fn bounded(l in arb_unit(), r in arb_unit(), cl in arb_unit(), cr in arb_unit()) {
            let c = EyeCalibration { left: cl, right: cr, n_images: 1, source: String::new() };
            let g = gan_eye_distance(1, Some(&EyePair::new(l, r)), &c).unwrap();
            prop_assert!((0.0..=1.0).contains(&g));
        }

        #[test]
        fn symmetric_in_which_eye_moves(
            cl in arb_unit(), cr in arb_unit(), angle in 0.0f64..std::f64::consts::TAU, d in 0.0f64..0.3
        ) {
            let c = EyeCalibration { left: cl, right: cr, n_images: 1, source: String::new() };
            let shift = |p: NormPoint| NormPoint::new(p.x() + d * angle.cos(), p.y() + d * angle.sin());
            if let (Ok(ml), Ok(mr)) = (shift(cl), shift(cr)) {
                let g1 = gan_eye_distance(1, Some(&EyePair::new(ml, cr)), &c).unwrap();
                let g2 = gan_eye_distance(1, Some(&EyePair::new(cl, mr)), &c).unwrap();
                prop_assert!((g1 - g2).abs() < 1e-12);
            }
        }

        #[test]
        fn scale_invariant(
            lx in 20.0f64..180.0, ly in 20.0f64..180.0, rx in 20.0f64..180.0, ry in 20.0f64..180.0,
            k in 1u32..6
        ) {
            let c = EyeCalibration { left: np(0.38, 0.45), right: np(0.62, 0.45), n_images: 1, source: String::new() };
            let base = score_record(&landmark(200, 200, (lx, ly), (rx, ry)), &c).unwrap();
            let kf = f64::from(k);
            let scaled = score_record(
                &landmark(200 * k, 200 * k, (lx * kf, ly * kf), (rx * kf, ry * kf)),
                &c,
            )
            .unwrap();
            // The six-point ring does not scale with k, but its centroid does.
            prop_assert!((base.g - scaled.g).abs() < 1e-12);
        }

        #[test]
        fn filter_is_sorted_subset_consistent_with_recall(
            gs in prop::collection::vec(0.0f64..=1.0, 1..50), t in 0.001f64..=1.0
        ) {
            let scores: Vec<_> = gs.iter().enumerate().map(|(i, &g)| scored(&format!("{i:03}"), g)).collect();
            let out = filter_candidates(&scores, t).unwrap();
            prop_assert!(out.windows(2).all(|w| w[0].g <= w[1].g));
            prop_assert!(out.iter().all(|s| scores.contains(s) && s.g < t));
            let recall = recall_at(&scores, t).unwrap();
            prop_assert_eq!(recall, out.len() as f64 / scores.len() as f64);
        }
    }

    #[test]
    fn score_file_duplicates_and_blank_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.jsonl");
        let line = r#"{"image_id":"x","n_faces":0,"g":1.0,"left":null,"right":null}"#;
        std::fs::write(&path, format!("{line}\n\n")).unwrap();
        assert_eq!(load_score_file(&path).unwrap().len(), 1);
        std::fs::write(&path, format!("{line}\n{line}\n")).unwrap();
        let err = load_score_file(&path).unwrap_err().to_string();
        assert!(err.contains("x (lines 1, 2)"), "{err}");
        std::fs::write(&path, "{\"image_id\":\"y\",\"n_faces\":2,\"g\":0.5,\"left\":null,\"right\":null}\n").unwrap();
        assert!(matches!(load_score_file(&path), Err(Error::Parse { line: 1, .. })));
    }
}
