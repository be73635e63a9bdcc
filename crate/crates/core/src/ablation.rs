//! Source-shuffling ablations.
//!
//! Every segment's source is replaced by the source of another segment,
//! chosen by a seeded derangement, and the drop in segment-level τ is
//! reported. A model that ignores its source shows no drop.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, ScoreMatrix};
use crate::error::{Error, Result};
use crate::estimator::{predict, EmbeddingSources, EstimatorModel};
use crate::metrics::segment_tau;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Text,
    Audio,
    Both,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Text, Modality::Audio, Modality::Both];

    fn text(self) -> bool {
        matches!(self, Modality::Text | Modality::Both)
    }

    fn audio(self) -> bool {
        matches!(self, Modality::Audio | Modality::Both)
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Text => "text",
            Modality::Audio => "audio",
            Modality::Both => "both",
        })
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "text" => Ok(Modality::Text),
            "audio" => Ok(Modality::Audio),
            "both" => Ok(Modality::Both),
            _ => Err(format!("unknown modality {s:?} (expected text, audio, or both)")),
        }
    }
}

/// A derangement over segment ids: segment `a` receives the source of
/// segment `mapping[a]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShufflePlan {
    pub mapping: Vec<(String, String)>,
    pub modality: Modality,
    pub seed: u64,
}

impl ShufflePlan {
    pub fn inverse(&self) -> ShufflePlan {
        let mut mapping: Vec<(String, String)> = self.mapping.iter().map(|(a, b)| (b.clone(), a.clone())).collect();
        let order: HashMap<&str, usize> =
            self.mapping.iter().enumerate().map(|(i, (a, _))| (a.as_str(), i)).collect();
        mapping.sort_by_key(|(a, _)| order.get(a.as_str()).copied());
        ShufflePlan {
            mapping,
            modality: self.modality,
            seed: self.seed,
        }
    }

    pub fn fixed_points(&self) -> usize {
        self.mapping.iter().filter(|(a, b)| a == b).count()
    }
}

/// A uniformly random derangement of `0..n`, by rejection sampling.
pub fn derangement(n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "a derangement needs at least 2 elements, got {n}"
        )));
    }
    let mut p: Vec<usize> = (0..n).collect();
    loop {
        p.shuffle(rng);
        if p.iter().enumerate().all(|(i, &j)| i != j) {
            return Ok(p);
        }
    }
}

pub fn make_shuffle(corpus: &Corpus, modality: Modality, seed: u64) -> Result<ShufflePlan> {
    let ids = corpus.seg_ids();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let perm = derangement(ids.len(), &mut rng)
        .map_err(|_| Error::InvalidInput(format!("cannot shuffle sources of {} segment(s)", ids.len())))?;
    Ok(ShufflePlan {
        mapping: ids.iter().zip(&perm).map(|(a, &j)| (a.to_string(), ids[j].to_string())).collect(),
        modality,
        seed,
    })
}

/// Rewrites the sources named by the plan's modality. Hypotheses, scores,
/// and system ids are untouched.
pub fn apply_shuffle(corpus: &Corpus, plan: &ShufflePlan) -> Result<Corpus> {
    let records = corpus.records();
    if plan.modality.text() && !plan.modality.audio() && records.iter().all(|r| r.src_text.is_none()) {
        return Err(Error::InvalidInput("no record has src_text; nothing to shuffle".into()));
    }
    if plan.modality.audio() && !plan.modality.text() && records.iter().all(|r| r.audio_key.is_none()) {
        return Err(Error::InvalidInput("no record has audio_key; nothing to shuffle".into()));
    }
    if records.iter().all(|r| r.src_text.is_none() && r.audio_key.is_none()) {
        return Err(Error::InvalidInput("no record has a source; nothing to shuffle".into()));
    }
    let mut source: HashMap<&str, (Option<&String>, Option<&String>)> = HashMap::new();
    for r in records {
        source
            .entry(r.seg_id.as_str())
            .or_insert((r.src_text.as_ref(), r.audio_key.as_ref()));
    }
    let donor: HashMap<&str, &str> = plan.mapping.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        let d = donor
            .get(r.seg_id.as_str())
            .ok_or_else(|| Error::InvalidInput(format!("segment {} is not covered by the shuffle plan", r.seg_id)))?;
        let (text, audio) = source
            .get(d)
            .ok_or_else(|| Error::InvalidInput(format!("plan maps {} to unknown segment {d}", r.seg_id)))?;
        let mut r = r.clone();
        if plan.modality.text() {
            r.src_text = text.cloned();
        }
        if plan.modality.audio() {
            r.audio_key = audio.cloned();
        }
        out.push(r);
    }
    Corpus::new(out)
}

/// Anything that scores a corpus.
pub trait Scorer {
    fn score(&self, corpus: &Corpus) -> Result<ScoreMatrix>;
}

impl<F> Scorer for F
where
    F: Fn(&Corpus) -> Result<ScoreMatrix>,
{
    fn score(&self, corpus: &Corpus) -> Result<ScoreMatrix> {
        self(corpus)
    }
}

/// A trained estimator bound to its embedding stores.
pub struct ModelScorer<'a> {
    pub model: &'a EstimatorModel,
    pub sources: EmbeddingSources<'a>,
}

impl Scorer for ModelScorer<'_> {
    fn score(&self, corpus: &Corpus) -> Result<ScoreMatrix> {
        predict(self.model, corpus, &self.sources)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub tau_real: f64,
    pub tau_shuffled: f64,
    /// `tau_shuffled - tau_real`; large negative values mean the source is used.
    pub delta: f64,
    pub modality: Modality,
    pub seed: u64,
}

/// Builds a report from precomputed real and shuffled scores.
pub fn report(
    human: &ScoreMatrix,
    real: &ScoreMatrix,
    shuffled: &ScoreMatrix,
    modality: Modality,
    seed: u64,
) -> Result<AblationReport> {
    let tau = |m: &ScoreMatrix, what: &str| {
        segment_tau(human, m)
            .value
            .ok_or_else(|| Error::InvalidInput(format!("segment tau of the {what} scores is undefined")))
    };
    let tau_real = tau(real, "real")?;
    let tau_shuffled = tau(shuffled, "shuffled")?;
    Ok(AblationReport {
        tau_real,
        tau_shuffled,
        delta: tau_shuffled - tau_real,
        modality,
        seed,
    })
}

pub fn ablate(
    scorer: &dyn Scorer,
    corpus: &Corpus,
    human: &ScoreMatrix,
    modality: Modality,
    seed: u64,
) -> Result<AblationReport> {
    let plan = make_shuffle(corpus, modality, seed)?;
    let shuffled = apply_shuffle(corpus, &plan)?;
    report(human, &scorer.score(corpus)?, &scorer.score(&shuffled)?, modality, seed)
}

/// One model's row of the ablation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub model: String,
    pub reports: Vec<AblationReport>,
}

/// Tab-separated table: model, real τ, and Δ per modality (`-` if not run).
pub fn render_table(rows: &[AblationRow]) -> String {
    let mut out = String::from("model\ttau_real\tdelta_text\tdelta_audio\tdelta_both\n");
    for row in rows {
        let real = row.reports.first().map_or("-".to_string(), |r| format!("{:.4}", r.tau_real));
        out.push_str(&row.model);
        out.push('\t');
        out.push_str(&real);
        for m in Modality::ALL {
            let cell = row
                .reports
                .iter()
                .find(|r| r.modality == m)
                .map_or("-".to_string(), |r| format!("{:+.4}", r.delta));
            out.push('\t');
            out.push_str(&cell);
        }
        out.push('\n');
    }
    out
}
