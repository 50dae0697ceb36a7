//! Pixel and normalized coordinates, and the two primitive operations on
//! them: averaging a detector's landmark points into an eye center, and
//! rescaling pixel coordinates into the unit square.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in image pixel space. `x` grows rightward, `y` grows downward,
/// origin at the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct PixelPoint {
    pub x: f64,
    pub y: f64,
}

impl PixelPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl TryFrom<[f64; 2]> for PixelPoint {
    type Error = String;

    fn try_from([x, y]: [f64; 2]) -> std::result::Result<Self, String> {
        let p = PixelPoint { x, y };
        if p.is_finite() {
            Ok(p)
        } else {
            Err(format!("non-finite pixel coordinate [{x}, {y}]"))
        }
    }
}

impl From<PixelPoint> for [f64; 2] {
    fn from(p: PixelPoint) -> Self {
        [p.x, p.y]
    }
}

/// A point in the closed unit square.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct NormPoint {
    x: f64,
    y: f64,
}

impl NormPoint {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y) {
            Ok(Self { x, y })
        } else {
            Err(Error::invalid(format!(
                "normalized point ({x}, {y}) lies outside the unit square"
            )))
        }
    }

    /// Clamps each component into `[0, 1]`. NaN components map to 0.
    pub fn clamped(x: f64, y: f64) -> Self {
        let clamp = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        Self {
            x: clamp(x),
            y: clamp(y),
        }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn distance(&self, other: &NormPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl TryFrom<[f64; 2]> for NormPoint {
    type Error = String;

    fn try_from([x, y]: [f64; 2]) -> std::result::Result<Self, String> {
        NormPoint::new(x, y).map_err(|e| e.to_string())
    }
}

impl From<NormPoint> for [f64; 2] {
    fn from(p: NormPoint) -> Self {
        [p.x, p.y]
    }
}

/// Normalized left and right eye centers of a single face.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EyePair {
    pub left: NormPoint,
    pub right: NormPoint,
}

impl EyePair {
    pub fn new(left: NormPoint, right: NormPoint) -> Self {
        Self { left, right }
    }
}

/// Mean of a non-empty list of landmark points.
pub fn eye_center(points: &[PixelPoint]) -> Result<PixelPoint> {
    if points.is_empty() {
        return Err(Error::invalid("eye landmark list is empty"));
    }
    if let Some(bad) = points.iter().find(|p| !p.is_finite()) {
        return Err(Error::invalid(format!(
            "non-finite landmark point ({}, {})",
            bad.x, bad.y
        )));
    }
    let n = points.len() as f64;
    let (sx, sy) = points
        .iter()
        .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
    Ok(PixelPoint::new(sx / n, sy / n))
}

/// Divides by the image dimensions and clamps into the unit square, so
/// landmarks a detector places slightly outside the frame still yield a
/// valid normalized point.
pub fn normalize_point(p: PixelPoint, width: u32, height: u32) -> Result<NormPoint> {
    if width == 0 || height == 0 {
        return Err(Error::invalid(format!(
            "image dimensions must be positive, got {width}x{height}"
        )));
    }
    if !p.is_finite() {
        return Err(Error::invalid(format!(
            "non-finite pixel point ({}, {})",
            p.x, p.y
        )));
    }
    Ok(NormPoint::clamped(
        p.x / f64::from(width),
        p.y / f64::from(height),
    ))
}
