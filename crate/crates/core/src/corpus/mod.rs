//! Corpus data model and ingestion.
//!
//! A QE corpus is an ordered list of [`SegmentRecord`]s, one per
//! (source segment, system) pair. Contrastive test sets are lists of
//! [`ContrastivePair`]s. Encoder outputs live in [`EmbeddingStore`]s and
//! trained estimators are persisted as checkpoints; both use small binary
//! containers defined in the submodules.

mod checkpoint;
mod embeddings;
mod scores;

use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, TensorSpec, CHECKPOINT_MAGIC};
pub use embeddings::{read_embeddings, write_embeddings, EmbeddingStore, EMBEDDING_MAGIC};
pub use scores::ScoreMatrix;

/// One hypothesis produced by one system for one source segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentRecord {
    pub seg_id: String,
    pub system_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub src_text: Option<String>,
    pub mt_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_score: Option<f64>,
    pub lang_pair: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_key: Option<String>,
}

/// Input format accepted by [`load_segments`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    /// Tab-separated with a header row naming [`SegmentRecord`] fields.
    /// Empty cells are absent optional fields.
    Tsv,
}

impl CorpusFormat {
    /// Guess the format from a file extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") => CorpusFormat::Tsv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

/// An ordered, validated collection of segment records.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    records: Vec<SegmentRecord>,
}

impl Corpus {
    /// Validates the record invariants and builds a corpus.
    pub fn new(records: Vec<SegmentRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            check_record(r).map_err(|m| Error::InvalidRecord(format!("record {}: {m}", i + 1)))?;
            if !seen.insert((r.seg_id.as_str(), r.system_id.as_str())) {
                return Err(Error::InvalidRecord(format!(
                    "record {}: duplicate (seg_id, system_id) = ({}, {})",
                    i + 1,
                    r.seg_id,
                    r.system_id
                )));
            }
        }
        Ok(Corpus { records })
    }

    pub fn records(&self) -> &[SegmentRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<SegmentRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct segment ids in first-seen order.
    pub fn seg_ids(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.seg_id.as_str()))
            .map(|r| r.seg_id.as_str())
            .collect()
    }

    /// Human scores as a matrix over (segment, system). Records without a
    /// human score leave their cell absent.
    pub fn human_scores(&self) -> Result<ScoreMatrix> {
        ScoreMatrix::from_entries(self.records.iter().filter_map(|r| {
            r.human_score
                .map(|s| (r.seg_id.clone(), r.system_id.clone(), s))
        }))
    }

    /// Writes the corpus as JSONL, one record per line, in corpus order.
    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for r in &self.records {
            let line = serde_json::to_string(r).expect("records always serialize");
            writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

fn check_record(r: &SegmentRecord) -> std::result::Result<(), String> {
    if r.mt_text.is_empty() {
        return Err("mt_text is empty".into());
    }
    if let Some(s) = r.human_score {
        if !s.is_finite() {
            return Err(format!("human_score {s} is not finite"));
        }
    }
    Ok(())
}

/// Loads a segment corpus, preserving file order.
pub fn load_segments(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Corpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let numbered: Vec<(usize, SegmentRecord)> = match format {
        CorpusFormat::Jsonl => parse_jsonl(path, &text)?,
        CorpusFormat::Tsv => parse_segment_tsv(path, &text)?,
    };

    let mut seen = HashSet::with_capacity(numbered.len());
    for (line, r) in &numbered {
        check_record(r).map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            line: *line,
            message,
        })?;
        if !seen.insert((r.seg_id.clone(), r.system_id.clone())) {
            return Err(Error::DuplicateKey {
                path: path.to_path_buf(),
                line: *line,
                key: format!("(seg_id={}, system_id={})", r.seg_id, r.system_id),
            });
        }
    }
    let records: Vec<SegmentRecord> = numbered.into_iter().map(|(_, r)| r).collect();
    log::debug!("loaded {} segment records from {}", records.len(), path.display());
    Ok(Corpus { records })
}

fn parse_jsonl<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<Vec<(usize, T)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map(|r| (i + 1, r))
                .map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })
        })
        .collect()
}

const TSV_FIELDS: [&str; 7] = [
    "seg_id",
    "system_id",
    "src_text",
    "mt_text",
    "human_score",
    "lang_pair",
    "audio_key",
];

fn parse_segment_tsv(path: &Path, text: &str) -> Result<Vec<(usize, SegmentRecord)>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Ok(Vec::new());
    };
    let columns: Vec<&str> = header.split('\t').map(str::trim).collect();
    let mut index = [None; TSV_FIELDS.len()];
    for (c, name) in columns.iter().enumerate() {
        let Some(f) = TSV_FIELDS.iter().position(|f| f == name) else {
            return Err(parse_err(1, format!("unknown column {name:?}")));
        };
        if index[f].replace(c).is_some() {
            return Err(parse_err(1, format!("column {name:?} appears twice")));
        }
    }

    let mut out = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != columns.len() {
            return Err(parse_err(
                line_no,
                format!("expected {} columns, found {}", columns.len(), cells.len()),
            ));
        }
        let get = |f: usize| index[f].map(|c| cells[c]).filter(|v| !v.is_empty());
        let required = |f: usize| {
            get(f)
                .map(str::to_owned)
                .ok_or_else(|| parse_err(line_no, format!("missing field `{}`", TSV_FIELDS[f])))
        };
        let human_score = match get(4) {
            Some(v) => Some(
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| parse_err(line_no, format!("invalid human_score {v:?}")))?,
            ),
            None => None,
        };
        out.push((
            line_no,
            SegmentRecord {
                seg_id: required(0)?,
                system_id: required(1)?,
                src_text: get(2).map(str::to_owned),
                mt_text: required(3)?,
                human_score,
                lang_pair: required(5)?,
                audio_key: get(6).map(str::to_owned),
            },
        ));
    }
    Ok(out)
}

/// A source with one correct and one incorrect translation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContrastivePair {
    pub pair_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub src_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_key: Option<String>,
    pub mt_correct: String,
    pub mt_incorrect: String,
    pub phenomenon: String,
    pub lang_pair: String,
}

/// Loads a contrastive set from JSONL. Phenomenon tags are kept verbatim.
pub fn load_contrastive(path: impl AsRef<Path>) -> Result<Vec<ContrastivePair>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let pairs: Vec<(usize, ContrastivePair)> = parse_jsonl(path, &text)?;
    let mut seen = HashSet::with_capacity(pairs.len());
    for (line, p) in &pairs {
        let err = |message: &str| Error::Parse {
            path: path.to_path_buf(),
            line: *line,
            message: format!("pair {}: {message}", p.pair_id),
        };
        if p.mt_correct == p.mt_incorrect {
            return Err(err("mt_correct and mt_incorrect are identical"));
        }
        if p.src_text.is_none() && p.audio_key.is_none() {
            return Err(err("neither src_text nor audio_key is present"));
        }
        if !seen.insert(p.pair_id.clone()) {
            return Err(Error::DuplicateKey {
                path: path.to_path_buf(),
                line: *line,
                key: format!("pair_id={}", p.pair_id),
            });
        }
    }
    Ok(pairs.into_iter().map(|(_, p)| p).collect())
}

/// Writes a contrastive set as JSONL.
pub fn write_contrastive(pairs: &[ContrastivePair], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for p in pairs {
        let line = serde_json::to_string(p).expect("pairs always serialize");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
