//! Candidate queue and label store backed by an append-only log.
//!
//! Every accepted label is appended to the log before it becomes visible.
//! The current label for `(annotator, image)` is the last one appended, and
//! all statistics are recomputed from current labels, so replaying the log
//! reproduces the store exactly.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::consensus::{consensus, ConsensusCounts, CurrentLabels};
use super::kappa::cohen_kappa;
use super::prevalence::{prevalence_report, PrevalenceReport};
use super::{AnnotationLabel, Category};
use crate::error::{Error, Result};
use crate::metric::{sort_candidates, ScoreRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub image_id: String,
    pub g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Durability {
    /// Flush to the OS after every append.
    #[default]
    Flush,
    /// Also fsync after every append.
    Sync,
}

#[derive(Debug, Clone, Default)]
pub struct StoreOptions {
    /// Present candidates in a seeded random order instead of ascending `g`.
    pub shuffle_seed: Option<u64>,
    pub durability: Durability,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsConfig {
    /// Size of the random sample the candidates were drawn from; enables the
    /// live prevalence report.
    pub n_sample: Option<u64>,
    pub extrapolation_base: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorProgress {
    pub annotator: String,
    pub labeled: usize,
    pub remaining: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationStats {
    pub revision: u64,
    pub n_candidates: usize,
    pub annotators: Vec<AnnotatorProgress>,
    /// `None` until two annotators share at least two labeled images.
    pub kappa: Option<f64>,
    pub consensus: Option<ConsensusCounts>,
    pub consensus_error: Option<String>,
    pub prevalence: Option<PrevalenceReport>,
}

#[derive(Debug)]
struct LabelLog {
    path: PathBuf,
    file: File,
    durability: Durability,
}

impl LabelLog {
    fn append(&mut self, label: &AnnotationLabel) -> Result<()> {
        let mut line = serde_json::to_string(label).expect("labels always serialize");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|()| self.file.flush())
            .map_err(|e| Error::io_at(&self.path, e))?;
        if self.durability == Durability::Sync {
            self.file.sync_data().map_err(|e| Error::io_at(&self.path, e))?;
        }
        Ok(())
    }
}

struct LogTail {
    good_len: u64,
    torn: bool,
    newline_terminated: bool,
}

#[derive(Debug)]
pub struct LabelStore {
    /// Presentation order.
    candidates: Vec<Candidate>,
    index: HashMap<String, usize>,
    history: Vec<AnnotationLabel>,
    current: CurrentLabels,
    log: Option<LabelLog>,
}

impl LabelStore {
    /// A store without a durable log.
    pub fn in_memory(candidates: &[ScoreRecord], options: &StoreOptions) -> Result<Self> {
        let mut sorted = candidates.to_vec();
        sort_candidates(&mut sorted);
        let mut ordered: Vec<Candidate> = sorted
            .into_iter()
            .map(|s| Candidate {
                image_id: s.image_id,
                g: s.g,
            })
            .collect();
        if let Some(seed) = options.shuffle_seed {
            ordered.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        }
        let mut index = HashMap::with_capacity(ordered.len());
        for (i, c) in ordered.iter().enumerate() {
            if index.insert(c.image_id.clone(), i).is_some() {
                return Err(Error::DuplicateIds(c.image_id.clone()));
            }
        }
        Ok(Self {
            candidates: ordered,
            index,
            history: Vec::new(),
            current: CurrentLabels::new(),
            log: None,
        })
    }

    /// Opens (creating if needed) the label log at `path` and replays it.
    /// A torn final line left by a crash mid-append is truncated away.
    pub fn open(candidates: &[ScoreRecord], path: &Path, options: &StoreOptions) -> Result<Self> {
        let mut store = Self::in_memory(candidates, options)?;
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)
            .map_err(|e| Error::io_at(path, e))?;
        let tail = store.replay_from(&mut file, path)?;
        if tail.torn {
            file.set_len(tail.good_len).map_err(|e| Error::io_at(path, e))?;
        } else if !tail.newline_terminated {
            // A complete final record without its newline.
            file.write_all(b"\n").map_err(|e| Error::io_at(path, e))?;
        }
        store.log = Some(LabelLog {
            path: path.to_path_buf(),
            file,
            durability: options.durability,
        });
        Ok(store)
    }

    /// Replays an existing log without opening it for writing. A torn final
    /// line is skipped, not repaired.
    pub fn replay(candidates: &[ScoreRecord], path: &Path, options: &StoreOptions) -> Result<Self> {
        let mut store = Self::in_memory(candidates, options)?;
        let mut file = File::open(path).map_err(|e| Error::io_at(path, e))?;
        store.replay_from(&mut file, path)?;
        Ok(store)
    }

    fn replay_from(&mut self, file: &mut File, path: &Path) -> Result<LogTail> {
        let mut tail = LogTail {
            good_len: 0,
            torn: false,
            newline_terminated: true,
        };
        let mut reader = BufReader::new(file);
        let mut line = String::new();
        let mut line_no = 0;
        let parse_error = |line_no, e: &dyn std::fmt::Display| Error::Parse {
            line: line_no,
            message: format!("{}: {e}", path.display()),
        };
        loop {
            line.clear();
            let read = reader.read_line(&mut line).map_err(|e| Error::io_at(path, e))?;
            if read == 0 {
                return Ok(tail);
            }
            line_no += 1;
            tail.newline_terminated = line.ends_with('\n');
            // Only the final line can lack a newline; if it doesn't parse, a
            // crash interrupted its append.
            if !tail.newline_terminated && serde_json::from_str::<AnnotationLabel>(&line).is_err() {
                tracing::warn!(path = %path.display(), line = line_no, "dropping torn final log line");
                tail.torn = true;
                return Ok(tail);
            }
            if !line.trim().is_empty() {
                let label: AnnotationLabel =
                    serde_json::from_str(&line).map_err(|e| parse_error(line_no, &e))?;
                self.apply(label).map_err(|e| parse_error(line_no, &e))?;
            }
            tail.good_len += read as u64;
        }
    }

    fn apply(&mut self, label: AnnotationLabel) -> Result<()> {
        if !self.index.contains_key(&label.image_id) {
            return Err(Error::NotFound(format!("unknown image {}", label.image_id)));
        }
        self.current.insert(
            (label.annotator_id.clone(), label.image_id.clone()),
            label.category,
        );
        self.history.push(label);
        Ok(())
    }

    pub fn submit_label(&mut self, label: AnnotationLabel) -> Result<u64> {
        if !self.index.contains_key(&label.image_id) {
            return Err(Error::NotFound(format!("unknown image {}", label.image_id)));
        }
        if let Some(log) = &mut self.log {
            log.append(&label)?;
        }
        self.apply(label)?;
        Ok(self.revision())
    }

    pub fn submit(
        &mut self,
        annotator: &str,
        image_id: &str,
        category: Category,
        timestamp: chrono::DateTime<chrono::Utc>,
    ) -> Result<u64> {
        self.submit_label(AnnotationLabel {
            annotator_id: annotator.to_string(),
            image_id: image_id.to_string(),
            category,
            timestamp,
        })
    }

    /// Number of labels accepted so far.
    pub fn revision(&self) -> u64 {
        self.history.len() as u64
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn candidate(&self, image_id: &str) -> Option<&Candidate> {
        self.index.get(image_id).map(|&i| &self.candidates[i])
    }

    pub fn history(&self) -> &[AnnotationLabel] {
        &self.history
    }

    pub fn current(&self) -> &CurrentLabels {
        &self.current
    }

    pub fn current_label(&self, annotator: &str, image_id: &str) -> Option<Category> {
        self.current
            .get(&(annotator.to_string(), image_id.to_string()))
            .copied()
    }

    /// Up to `k` candidates this annotator has not labeled, in presentation
    /// order. Any annotator id is accepted.
    pub fn next_candidates(&self, annotator: &str, k: usize) -> Vec<Candidate> {
        self.candidates
            .iter()
            .filter(|c| self.current_label(annotator, &c.image_id).is_none())
            .take(k)
            .cloned()
            .collect()
    }

    pub fn stats(&self, config: &StatsConfig) -> AnnotationStats {
        let mut per_annotator: BTreeMap<&str, usize> = BTreeMap::new();
        for (annotator, _) in self.current.keys() {
            *per_annotator.entry(annotator.as_str()).or_default() += 1;
        }
        let annotators = per_annotator
            .into_iter()
            .map(|(annotator, labeled)| AnnotatorProgress {
                annotator: annotator.to_string(),
                labeled,
                remaining: self.candidates.len() - labeled,
            })
            .collect();

        let ids = self.candidates.iter().map(|c| c.image_id.as_str());
        let (kappa, counts, consensus_error) = match consensus(ids, &self.current) {
            Ok(c) => {
                let kappa = if c.pairs.len() >= 2 {
                    cohen_kappa(&c.pairs).ok()
                } else {
                    None
                };
                (kappa, Some(c.counts), None)
            }
            Err(e) => (None, None, Some(e.to_string())),
        };
        let prevalence = match (counts, config.n_sample) {
            (Some(counts), Some(n)) => {
                prevalence_report(&counts, n, kappa, config.extrapolation_base, None).ok()
            }
            _ => None,
        };
        AnnotationStats {
            revision: self.revision(),
            n_candidates: self.candidates.len(),
            annotators,
            kappa,
            consensus: counts,
            consensus_error,
            prevalence,
        }
    }
}
