use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::Category;
use crate::error::{Error, Result};

/// Current label per `(annotator, image)`.
pub type CurrentLabels = BTreeMap<(String, String), Category>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConsensusCounts {
    pub n_candidates: usize,
    pub n_doubly_labeled: usize,
    /// Both annotators chose category 1.
    pub strict: usize,
    /// Both annotators chose category 1 or 2.
    pub loose: usize,
}

impl ConsensusCounts {
    pub fn validate(&self) -> Result<()> {
        if self.strict <= self.loose
            && self.loose <= self.n_doubly_labeled
            && self.n_doubly_labeled <= self.n_candidates
        {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "consensus counts must satisfy strict <= loose <= doubly labeled <= candidates, got {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Consensus {
    pub counts: ConsensusCounts,
    /// The two annotators, in sorted order; fewer if fewer have labeled.
    pub annotators: Vec<String>,
    pub strict_ids: Vec<String>,
    pub loose_ids: Vec<String>,
    /// `(first annotator, second annotator)` labels per doubly-labeled image,
    /// in candidate order.
    pub pairs: Vec<(Category, Category)>,
}

/// Consensus over a candidate set for exactly two annotators. Images not
/// labeled by both count only toward `n_candidates`; labels on images outside
/// the candidate set are ignored.
pub fn consensus<'a>(
    candidates: impl IntoIterator<Item = &'a str>,
    labels: &CurrentLabels,
) -> Result<Consensus> {
    let annotators: BTreeSet<&str> = labels.keys().map(|(a, _)| a.as_str()).collect();
    if annotators.len() > 2 {
        return Err(Error::Unsupported(format!(
            "consensus is defined for two annotators, found {}",
            annotators.len()
        )));
    }
    let annotators: Vec<String> = annotators.into_iter().map(str::to_string).collect();
    let mut out = Consensus {
        annotators: annotators.clone(),
        ..Consensus::default()
    };
    for image in candidates {
        out.counts.n_candidates += 1;
        let [a, b] = annotators.as_slice() else {
            continue;
        };
        let la = labels.get(&(a.clone(), image.to_string()));
        let lb = labels.get(&(b.clone(), image.to_string()));
        let (Some(&la), Some(&lb)) = (la, lb) else {
            continue;
        };
        out.counts.n_doubly_labeled += 1;
        out.pairs.push((la, lb));
        if la == Category::HighlyLikelyGan && lb == Category::HighlyLikelyGan {
            out.counts.strict += 1;
            out.strict_ids.push(image.to_string());
        }
        if la.is_gan() && lb.is_gan() {
            out.counts.loose += 1;
            out.loose_ids.push(image.to_string());
        }
    }
    Ok(out)
}

pub fn consensus_counts<'a>(
    candidates: impl IntoIterator<Item = &'a str>,
    labels: &CurrentLabels,
) -> Result<ConsensusCounts> {
    consensus(candidates, labels).map(|c| c.counts)
}
