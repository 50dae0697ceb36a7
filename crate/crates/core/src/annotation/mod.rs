//! Two-annotator review of candidate images: labels, agreement, consensus
//! counts, prevalence bounds, and the durable label store.

pub mod consensus;
pub mod kappa;
pub mod prevalence;
pub mod store;

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use consensus::{consensus, consensus_counts, Consensus, ConsensusCounts, CurrentLabels};
pub use kappa::cohen_kappa;
pub use prevalence::{prevalence_report, render_percent, PrevalenceReport, TweetTotals};
pub use store::{
    AnnotationStats, AnnotatorProgress, Candidate, Durability, LabelStore, StatsConfig, StoreOptions,
};

/// Reviewer judgment, serialized as its number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Category {
    HighlyLikelyGan = 1,
    LikelyGan = 2,
    NotGan = 3,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::HighlyLikelyGan, Category::LikelyGan, Category::NotGan];

    pub fn code(self) -> u8 {
        self as u8
    }

    /// Category 1 or 2.
    pub fn is_gan(self) -> bool {
        matches!(self, Category::HighlyLikelyGan | Category::LikelyGan)
    }
}

impl TryFrom<u8> for Category {
    type Error = Error;

    fn try_from(code: u8) -> Result<Self> {
        match code {
            1 => Ok(Category::HighlyLikelyGan),
            2 => Ok(Category::LikelyGan),
            3 => Ok(Category::NotGan),
            other => Err(Error::invalid(format!("category must be 1, 2 or 3, got {other}"))),
        }
    }
}

impl TryFrom<i64> for Category {
    type Error = Error;

    fn try_from(code: i64) -> Result<Self> {
        u8::try_from(code)
            .map_err(|_| Error::invalid(format!("category must be 1, 2 or 3, got {code}")))
            .and_then(Category::try_from)
    }
}

impl From<Category> for u8 {
    fn from(c: Category) -> u8 {
        c.code()
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

/// One submitted judgment; also the label-log line format
/// `{"annotator","image_id","category","ts"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationLabel {
    #[serde(rename = "annotator")]
    pub annotator_id: String,
    pub image_id: String,
    pub category: Category,
    #[serde(rename = "ts")]
    pub timestamp: DateTime<Utc>,
}
