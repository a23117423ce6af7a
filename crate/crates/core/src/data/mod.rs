//! Question groups: a new question `q`, its ranked related questions `q_i`,
//! and the comments of each related thread.
//!
//! The canonical file format is JSON:
//!
//! ```json
//! {
//!   "format": "jointcqa.dataset",
//!   "version": 1,
//!   "groups": [{
//!     "id": "Q1", "text": "...", "author": null,
//!     "threads": [{
//!       "id": "Q1_R1", "rank": 1, "text": "...", "author": "U7", "label_b": "Relevant",
//!       "comments": [{"id": "Q1_R1_C1", "rank": 1, "text": "...", "author": "U9",
//!                     "label_a": "Good", "label_c": "Bad"}]
//!     }]
//!   }]
//! }
//! ```
//!
//! Labels are either booleans or strings resolved through a [`LabelMap`];
//! absent labels are allowed at prediction time. `rank`, when present, must
//! equal the 1-based document position. Threads and comments may carry a
//! precomputed `features` object (a [`FeatureRow`]), which then replaces
//! text-based extraction; synthetic datasets use this. A comment may also
//! carry `features_c`, a separate row for the C network.

mod baseline;
mod synth;
mod xml;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::FeatureRow;
use crate::task::{PerTask, Task};

pub use baseline::{baseline_orderings, BaselineScores};
pub use synth::{synth_generate, SynthConfig, SYNTH_DIMS, SYNTH_PHI_WIDTH};
pub use xml::parse_semeval_xml;

pub const DATASET_FORMAT: &str = "jointcqa.dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comment {
    pub id: String,
    /// Chronological position `m`, from 1.
    pub rank: usize,
    pub text: String,
    pub author: Option<String>,
    pub label_a: Option<bool>,
    pub label_c: Option<bool>,
    /// Precomputed row read by the A network, and by the C network unless
    /// `features_c` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<FeatureRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features_c: Option<FeatureRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thread {
    pub id: String,
    /// Retrieval rank `i`, from 1.
    pub rank: usize,
    pub text: String,
    pub author: Option<String>,
    pub label_b: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<FeatureRow>,
    pub comments: Vec<Comment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionGroup {
    pub id: String,
    pub text: String,
    pub author: Option<String>,
    pub threads: Vec<Thread>,
}

impl QuestionGroup {
    pub fn comments(&self) -> impl Iterator<Item = (&Thread, &Comment)> {
        self.threads.iter().flat_map(|t| t.comments.iter().map(move |c| (t, c)))
    }

    pub fn comment_count(&self) -> usize {
        self.threads.iter().map(|t| t.comments.len()).sum()
    }

    /// Gold labels of one task in graph node order (threads for B, comments
    /// thread-major for A and C).
    pub fn labels(&self, task: Task) -> Vec<Option<bool>> {
        match task {
            Task::B => self.threads.iter().map(|t| t.label_b).collect(),
            Task::A => self.comments().map(|(_, c)| c.label_a).collect(),
            Task::C => self.comments().map(|(_, c)| c.label_c).collect(),
        }
    }
}

/// Raw label string to binary class, per task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMap {
    pub a: BTreeMap<String, bool>,
    pub b: BTreeMap<String, bool>,
    pub c: BTreeMap<String, bool>,
}

impl Default for LabelMap {
    fn default() -> Self {
        let comment = || {
            BTreeMap::from([
                ("Good".to_string(), true),
                ("PotentiallyUseful".to_string(), false),
                ("Bad".to_string(), false),
            ])
        };
        Self {
            a: comment(),
            b: BTreeMap::from([
                ("PerfectMatch".to_string(), true),
                ("Relevant".to_string(), true),
                ("Irrelevant".to_string(), false),
            ]),
            c: comment(),
        }
    }
}

impl LabelMap {
    pub fn table(&self, task: Task) -> &BTreeMap<String, bool> {
        match task {
            Task::A => &self.a,
            Task::B => &self.b,
            Task::C => &self.c,
        }
    }

    pub fn resolve(&self, task: Task, raw: &str, location: &str) -> Result<bool> {
        self.table(task).get(raw).copied().ok_or_else(|| Error::UnknownLabel {
            label: raw.to_string(),
            location: location.to_string(),
        })
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawLabel {
    Bool(bool),
    Text(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawComment {
    id: String,
    rank: Option<usize>,
    #[serde(default)]
    text: String,
    author: Option<String>,
    label_a: Option<RawLabel>,
    label_c: Option<RawLabel>,
    features: Option<FeatureRow>,
    features_c: Option<FeatureRow>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawThread {
    id: String,
    rank: Option<usize>,
    #[serde(default)]
    text: String,
    author: Option<String>,
    label_b: Option<RawLabel>,
    features: Option<FeatureRow>,
    #[serde(default)]
    comments: Vec<RawComment>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGroup {
    id: String,
    #[serde(default)]
    text: String,
    author: Option<String>,
    #[serde(default)]
    threads: Vec<RawThread>,
}

#[derive(Deserialize)]
struct RawDataset {
    format: String,
    version: u32,
    groups: Vec<RawGroup>,
}

#[derive(Serialize)]
struct DatasetOut<'a> {
    format: &'a str,
    version: u32,
    groups: &'a [QuestionGroup],
}

fn label(raw: Option<RawLabel>, task: Task, map: &LabelMap, location: impl FnOnce() -> String) -> Result<Option<bool>> {
    match raw {
        None => Ok(None),
        Some(RawLabel::Bool(b)) => Ok(Some(b)),
        Some(RawLabel::Text(s)) => map.resolve(task, &s, &location()).map(Some),
    }
}

fn rank(given: Option<usize>, position: usize, location: impl FnOnce() -> String) -> Result<usize> {
    match given {
        Some(r) if r != position => Err(Error::Malformed {
            location: location(),
            message: format!("rank {r} where {position} was expected (ranks must be contiguous from 1)"),
        }),
        _ => Ok(position),
    }
}

/// Rank contiguity and id uniqueness across a dataset.
pub fn validate(groups: &[QuestionGroup]) -> Result<()> {
    let mut ids = HashSet::new();
    let mut unique = |id: &str| {
        if ids.insert(id.to_string()) {
            Ok(())
        } else {
            Err(Error::DuplicateId(id.to_string()))
        }
    };
    for g in groups {
        unique(&g.id)?;
        for (ti, t) in g.threads.iter().enumerate() {
            unique(&t.id)?;
            if t.rank != ti + 1 {
                return Err(Error::Malformed {
                    location: format!("thread {}", t.id),
                    message: format!("rank {} at position {}", t.rank, ti + 1),
                });
            }
            for (ci, c) in t.comments.iter().enumerate() {
                unique(&c.id)?;
                if c.rank != ci + 1 {
                    return Err(Error::Malformed {
                        location: format!("comment {}", c.id),
                        message: format!("rank {} at position {}", c.rank, ci + 1),
                    });
                }
            }
        }
    }
    Ok(())
}

pub fn parse_json(text: &str, map: &LabelMap, origin: &str) -> Result<Vec<QuestionGroup>> {
    let raw: RawDataset = serde_json::from_str(text).map_err(|e| Error::Malformed {
        location: format!("{origin}:{}:{}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    if raw.format != DATASET_FORMAT || raw.version != DATASET_VERSION {
        return Err(Error::Format(format!(
            "{origin}: expected {DATASET_FORMAT} v{DATASET_VERSION}, found {} v{}",
            raw.format, raw.version
        )));
    }
    let mut groups = Vec::with_capacity(raw.groups.len());
    for g in raw.groups {
        let mut threads = Vec::with_capacity(g.threads.len());
        for (ti, t) in g.threads.into_iter().enumerate() {
            let tloc = || format!("{origin}: thread {}", t.id);
            let mut comments = Vec::with_capacity(t.comments.len());
            for (ci, c) in t.comments.into_iter().enumerate() {
                let cloc = || format!("{origin}: comment {}", c.id);
                comments.push(Comment {
                    rank: rank(c.rank, ci + 1, cloc)?,
                    label_a: label(c.label_a, Task::A, map, || format!("{} label_a", cloc()))?,
                    label_c: label(c.label_c, Task::C, map, || format!("{} label_c", cloc()))?,
                    id: c.id,
                    text: c.text,
                    author: c.author,
                    features: c.features,
                    features_c: c.features_c,
                });
            }
            threads.push(Thread {
                rank: rank(t.rank, ti + 1, tloc)?,
                label_b: label(t.label_b, Task::B, map, || format!("{} label_b", tloc()))?,
                id: t.id,
                text: t.text,
                author: t.author,
                features: t.features,
                comments,
            });
        }
        groups.push(QuestionGroup {
            id: g.id,
            text: g.text,
            author: g.author,
            threads,
        });
    }
    validate(&groups)?;
    Ok(groups)
}

pub fn to_json(groups: &[QuestionGroup]) -> Result<String> {
    let out = DatasetOut {
        format: DATASET_FORMAT,
        version: DATASET_VERSION,
        groups,
    };
    Ok(serde_json::to_string_pretty(&out)? + "\n")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    #[default]
    Json,
    SemevalXml,
}

impl DatasetFormat {
    /// `.xml` files are SemEval XML, anything else JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("xml") => DatasetFormat::SemevalXml,
            _ => DatasetFormat::Json,
        }
    }
}

pub fn parse_dataset(text: &str, format: DatasetFormat, map: &LabelMap, origin: &str) -> Result<Vec<QuestionGroup>> {
    match format {
        DatasetFormat::Json => parse_json(text, map, origin),
        DatasetFormat::SemevalXml => parse_semeval_xml(text, map, origin),
    }
}

pub fn load_dataset(path: &Path, format: Option<DatasetFormat>, map: &LabelMap) -> Result<Vec<QuestionGroup>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let format = format.unwrap_or_else(|| DatasetFormat::from_path(path));
    parse_dataset(&text, format, map, &path.display().to_string())
}

pub fn save_dataset(path: &Path, groups: &[QuestionGroup]) -> Result<()> {
    std::fs::write(path, to_json(groups)?).map_err(|e| Error::io(path, e))
}

/// Counts of labeled instances per task.
pub fn label_counts(groups: &[QuestionGroup]) -> PerTask<usize> {
    let count = |t: Task| groups.iter().map(|g| g.labels(t).iter().flatten().count()).sum();
    PerTask::new(count(Task::A), count(Task::B), count(Task::C))
}
