//! Detection of GAN-generated profile pictures by eye placement, and the
//! bookkeeping around it: landmark ingestion, synthetic test corpora,
//! descriptive statistics and density estimates, and the two-annotator
//! review that turns candidate lists into prevalence bounds.

pub mod annotation;
pub mod detect;
pub mod error;
pub mod geometry;
pub mod landmarks;
pub mod metric;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{eye_center, normalize_point, EyePair, NormPoint, PixelPoint};
pub use landmarks::{FaceLandmarks, LandmarkRecord};
pub use metric::{EyeCalibration, ScoreRecord};
