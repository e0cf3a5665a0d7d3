//! Annotation loading, validation, and deterministic splitting.
//!
//! The on-disk format (`harness_json`) is a single JSON object:
//!
//! ```json
//! {
//!   "videos": {"<video_id>": {"duration_s": 12.0, "width": 1920, "height": 1080, "source": "clips/v0.mp4"}},
//!   "questions": [{"question_uid": "q0", "video_id": "<video_id>", "question": "...",
//!                  "options": ["a", "b", "c"], "answer_index": 1}]
//! }
//! ```
//!
//! Record iteration order is the file order; every split and sample below is
//! a pure function of (dataset content, config, seed), so re-running produces
//! byte-identical manifests.

use std::collections::{BTreeMap, HashSet};
use std::io::Read;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifier of the shuffling PRNG, written into split manifests so a split
/// can be reproduced by any implementation that speaks the same generator.
pub const PRNG_ID: &str = "chacha20";

/// One multiple-choice question over a video. Options are in canonical order;
/// `answer_index` is absent for unlabeled (hidden-label) sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub question_uid: String,
    pub video_id: String,
    pub question: String,
    pub options: [String; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub answer_index: Option<u8>,
}

/// Metadata for one video; enough to plan frame extraction without decoding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub video_id: String,
    pub duration_s: f64,
    pub width: u32,
    pub height: u32,
    pub source: String,
}

/// An ordered collection of question records plus the videos they reference.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    records: Vec<QuestionRecord>,
    videos: BTreeMap<String, VideoMeta>,
}

/// Supported annotation formats. External benchmark formats are converted to
/// `harness_json` upstream; this crate only reads the one schema.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    HarnessJson,
}

/// Which unit a split shuffles: whole videos (all their questions move
/// together) or individual questions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    ByVideo,
    ByQuestion,
}

impl Default for Granularity {
    fn default() -> Self {
        Granularity::ByVideo
    }
}

/// Split parameters. Defaults mirror the published setup: a 5% holdout and
/// 5-fold cross-validation, shuffled at video granularity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub holdout_fraction: f64,
    pub k_folds: u32,
    pub seed: u64,
    pub granularity: Granularity,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            holdout_fraction: 0.05,
            k_folds: 5,
            seed: 0,
            granularity: Granularity::ByVideo,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::Config(format!(
                "holdout_fraction must be in (0,1), got {}",
                self.holdout_fraction
            )));
        }
        if self.k_folds < 2 {
            return Err(Error::Config(format!(
                "k_folds must be >= 2, got {}",
                self.k_folds
            )));
        }
        Ok(())
    }
}

/// Persisted description of one split side pair: the question uids on each
/// side, plus everything needed to re-derive the split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub prng: String,
    pub granularity: Granularity,
    pub train: Vec<String>,
    pub val: Vec<String>,
}

// Raw deserialization targets; validated into the public types so that error
// messages can name the offending record.
#[derive(Deserialize)]
struct AnnotationFile {
    videos: BTreeMap<String, RawVideo>,
    questions: Vec<RawQuestion>,
}

#[derive(Deserialize)]
struct RawVideo {
    duration_s: f64,
    width: u32,
    height: u32,
    source: String,
}

#[derive(Deserialize)]
struct RawQuestion {
    question_uid: String,
    video_id: String,
    question: String,
    options: Vec<String>,
    #[serde(default)]
    answer_index: Option<u8>,
}

/// Load and validate annotations from a reader.
pub fn load_annotations<R: Read>(mut source: R, format: Format) -> Result<Dataset> {
    let Format::HarnessJson = format;
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let file: AnnotationFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        offset: byte_offset(&text, e.line(), e.column()),
        message: e.to_string(),
    })?;

    let mut videos = BTreeMap::new();
    for (video_id, raw) in file.videos {
        if !(raw.duration_s > 0.0 && raw.duration_s.is_finite()) {
            return Err(Error::Validation(format!(
                "video {video_id:?}: duration_s must be positive, got {}",
                raw.duration_s
            )));
        }
        if raw.width == 0 || raw.height == 0 {
            return Err(Error::Validation(format!(
                "video {video_id:?}: width and height must be >= 1"
            )));
        }
        videos.insert(
            video_id.clone(),
            VideoMeta {
                video_id,
                duration_s: raw.duration_s,
                width: raw.width,
                height: raw.height,
                source: raw.source,
            },
        );
    }

    let mut records = Vec::with_capacity(file.questions.len());
    let mut seen = HashSet::new();
    for raw in file.questions {
        let uid = raw.question_uid;
        if !seen.insert(uid.clone()) {
            return Err(Error::Validation(format!(
                "duplicate question_uid {uid:?}"
            )));
        }
        let options: [String; 3] = raw.options.try_into().map_err(|v: Vec<String>| {
            Error::Validation(format!(
                "question {uid:?}: expected exactly 3 options, found {}",
                v.len()
            ))
        })?;
        if let Some(idx) = raw.answer_index {
            if idx > 2 {
                return Err(Error::Validation(format!(
                    "question {uid:?}: answer_index must be 0..2, got {idx}"
                )));
            }
        }
        if !videos.contains_key(&raw.video_id) {
            return Err(Error::Validation(format!(
                "question {uid:?}: unknown video_id {:?}",
                raw.video_id
            )));
        }
        records.push(QuestionRecord {
            question_uid: uid,
            video_id: raw.video_id,
            question: raw.question,
            options,
            answer_index: raw.answer_index,
        });
    }

    Ok(Dataset { records, videos })
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    // serde_json reports 1-based line/column
    let mut offset = 0;
    for (i, l) in text.split('\n').enumerate() {
        if i + 1 == line {
            return offset + column.saturating_sub(1);
        }
        offset += l.len() + 1;
    }
    offset
}

impl Dataset {
    /// Assemble a dataset directly (primarily for tests and converters);
    /// applies the same invariants as the loader.
    pub fn new(records: Vec<QuestionRecord>, videos: Vec<VideoMeta>) -> Result<Self> {
        let videos: BTreeMap<String, VideoMeta> =
            videos.into_iter().map(|v| (v.video_id.clone(), v)).collect();
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.question_uid.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate question_uid {:?}",
                    r.question_uid
                )));
            }
            if !videos.contains_key(&r.video_id) {
                return Err(Error::Validation(format!(
                    "question {:?}: unknown video_id {:?}",
                    r.question_uid, r.video_id
                )));
            }
        }
        Ok(Dataset { records, videos })
    }

    pub fn records(&self) -> &[QuestionRecord] {
        &self.records
    }

    pub fn videos(&self) -> &BTreeMap<String, VideoMeta> {
        &self.videos
    }

    pub fn video(&self, video_id: &str) -> Option<&VideoMeta> {
        self.videos.get(video_id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labeled_count(&self) -> usize {
        self.records.iter().filter(|r| r.answer_index.is_some()).count()
    }

    /// Unit ids at the given granularity, in first-appearance (file) order.
    pub fn units(&self, granularity: Granularity) -> Vec<String> {
        match granularity {
            Granularity::ByQuestion => {
                self.records.iter().map(|r| r.question_uid.clone()).collect()
            }
            Granularity::ByVideo => {
                let mut seen = HashSet::new();
                self.records
                    .iter()
                    .filter(|r| seen.insert(r.video_id.as_str()))
                    .map(|r| r.video_id.clone())
                    .collect()
            }
        }
    }

    /// Distinct video ids referenced by records, in file order.
    pub fn video_ids(&self) -> Vec<String> {
        self.units(Granularity::ByVideo)
    }

    fn subset_by_units(&self, units: &HashSet<&str>, granularity: Granularity) -> Dataset {
        let records: Vec<QuestionRecord> = self
            .records
            .iter()
            .filter(|r| {
                let unit = match granularity {
                    Granularity::ByVideo => r.video_id.as_str(),
                    Granularity::ByQuestion => r.question_uid.as_str(),
                };
                units.contains(unit)
            })
            .cloned()
            .collect();
        let referenced: HashSet<&str> = records.iter().map(|r| r.video_id.as_str()).collect();
        let videos = self
            .videos
            .iter()
            .filter(|(id, _)| referenced.contains(id.as_str()))
            .map(|(id, v)| (id.clone(), v.clone()))
            .collect();
        Dataset { records, videos }
    }

    fn subset_by_uids(&self, uids: &HashSet<&str>) -> Dataset {
        self.subset_by_units(uids, Granularity::ByQuestion)
    }
}

fn shuffled_units(ds: &Dataset, cfg: &SplitConfig) -> Vec<String> {
    let mut units = ds.units(cfg.granularity);
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    units.shuffle(&mut rng);
    units
}

// Tolerant floor: absorbs the binary representation error of decimal
// fractions (e.g. 0.3 * 10 = 2.999...96) without changing genuine fractional
// parts.
fn floor_units(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64) + 1e-9).floor() as usize
}

/// Split off `floor(holdout_fraction x units)` units as a validation side.
/// Returns `(train, val)`.
pub fn holdout_split(ds: &Dataset, cfg: &SplitConfig) -> Result<(Dataset, Dataset)> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::Validation("cannot split an empty dataset".into()));
    }
    let shuffled = shuffled_units(ds, cfg);
    let n_val = floor_units(cfg.holdout_fraction, shuffled.len());
    if n_val == 0 {
        return Err(Error::Validation(format!(
            "holdout too small: floor({} x {}) = 0 units",
            cfg.holdout_fraction,
            shuffled.len()
        )));
    }
    let val_units: HashSet<&str> = shuffled[..n_val].iter().map(String::as_str).collect();
    let val = ds.subset_by_units(&val_units, cfg.granularity);
    let train_units: HashSet<&str> = shuffled[n_val..].iter().map(String::as_str).collect();
    let train = ds.subset_by_units(&train_units, cfg.granularity);
    Ok((train, val))
}

/// Partition the unit set into `k_folds` validation parts whose sizes differ
/// by at most one; fold i trains on the complement of part i.
pub fn kfold_split(ds: &Dataset, cfg: &SplitConfig) -> Result<Vec<(Dataset, Dataset)>> {
    cfg.validate()?;
    let shuffled = shuffled_units(ds, cfg);
    let k = cfg.k_folds as usize;
    if shuffled.len() < k {
        return Err(Error::Validation(format!(
            "cannot make {k} folds from {} units",
            shuffled.len()
        )));
    }
    let base = shuffled.len() / k;
    let extra = shuffled.len() % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let size = base + usize::from(i < extra);
        let part = &shuffled[start..start + size];
        start += size;
        let val_units: HashSet<&str> = part.iter().map(String::as_str).collect();
        let val = ds.subset_by_units(&val_units, cfg.granularity);
        let train_units: HashSet<&str> = shuffled
            .iter()
            .map(String::as_str)
            .filter(|u| !val_units.contains(u))
            .collect();
        let train = ds.subset_by_units(&train_units, cfg.granularity);
        folds.push((train, val));
    }
    Ok(folds)
}

/// Uniform sample of `n` records without replacement, preserving the
/// original relative order.
pub fn sample_subset(ds: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Validation("subset size must be positive".into()));
    }
    if n > ds.len() {
        return Err(Error::Validation(format!(
            "cannot sample {n} records from {}",
            ds.len()
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, ds.len(), n).into_vec();
    picked.sort_unstable();
    let uids: HashSet<&str> = picked
        .iter()
        .map(|&i| ds.records[i].question_uid.as_str())
        .collect();
    Ok(ds.subset_by_uids(&uids))
}

impl SplitManifest {
    /// Describe a (train, val) pair. The listed uids are question uids (for
    /// video-granularity splits, every question of a video lands on that
    /// video's side), in dataset file order.
    pub fn describe(cfg: &SplitConfig, train: &Dataset, val: &Dataset) -> Self {
        SplitManifest {
            seed: cfg.seed,
            prng: PRNG_ID.to_string(),
            granularity: cfg.granularity,
            train: train.records.iter().map(|r| r.question_uid.clone()).collect(),
            val: val.records.iter().map(|r| r.question_uid.clone()).collect(),
        }
    }

    /// Re-materialize the two sides from a persisted manifest.
    pub fn apply(&self, ds: &Dataset) -> Result<(Dataset, Dataset)> {
        let known: HashSet<&str> = ds.records.iter().map(|r| r.question_uid.as_str()).collect();
        for uid in self.train.iter().chain(self.val.iter()) {
            if !known.contains(uid.as_str()) {
                return Err(Error::Validation(format!(
                    "manifest lists unknown question_uid {uid:?}"
                )));
            }
        }
        let train_uids: HashSet<&str> = self.train.iter().map(String::as_str).collect();
        let val_uids: HashSet<&str> = self.val.iter().map(String::as_str).collect();
        if let Some(both) = train_uids.intersection(&val_uids).next() {
            return Err(Error::Validation(format!(
                "manifest places {both:?} on both sides"
            )));
        }
        Ok((ds.subset_by_uids(&train_uids), ds.subset_by_uids(&val_uids)))
    }
}
