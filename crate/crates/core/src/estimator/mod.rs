//! Regression estimator over precomputed sentence and frame embeddings.
//!
//! Each input is a hypothesis embedding `h`, a text source embedding `s_t`,
//! and/or a sequence of speech frames. Speech frames go through a learned
//! `d -> d` projection and are pooled; the sources are fused into one vector
//! `s`; the head is an MLP over `[h; s; |h - s|; h ⊙ s]` (or over `h + s` for
//! the additive variant).
//!
//! Embedding lookup keys: the hypothesis store is keyed by `mt_text`, the
//! text-source store by `src_text`, and the speech store by `audio_key`.
//! Text entries with several frames are mean-pooled on lookup.

mod config;
mod model;
mod train;

use std::collections::HashSet;

use ndarray::{Array1, Axis};

pub use config::{EstimatorConfig, Fusion, Loss, Pooling};
pub use model::{additive_combine, interaction, pool, EstimatorModel, Example, Params};
pub use train::{fit, train, EarlyStopping, EpochRecord, StopCheck, TrainOutcome};

use crate::corpus::{ContrastivePair, Corpus, EmbeddingStore, ScoreMatrix, SegmentRecord};
use crate::error::{Error, Result};

/// The embedding stores an estimator reads from.
#[derive(Debug, Clone, Copy)]
pub struct EmbeddingSources<'a> {
    pub hypothesis: &'a EmbeddingStore,
    pub text: Option<&'a EmbeddingStore>,
    pub audio: Option<&'a EmbeddingStore>,
}

struct Lookup<'r> {
    what: String,
    hypothesis: &'r str,
    text: Option<&'r str>,
    audio: Option<&'r str>,
}

impl<'a> EmbeddingSources<'a> {
    fn check(&self, config: &EstimatorConfig) -> Result<()> {
        let d = config.dim;
        let stores = [
            ("hypothesis", Some(self.hypothesis), true),
            ("text", self.text, config.fusion.uses_text()),
            ("audio", self.audio, config.fusion.uses_speech()),
        ];
        for (name, store, needed) in stores {
            match store {
                None if needed => {
                    return Err(Error::Config(format!(
                        "fusion {} needs a {name} embedding store",
                        config.fusion
                    )))
                }
                Some(s) if needed && s.dim() != d => {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        got: s.dim(),
                    })
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn resolve(&self, config: &EstimatorConfig, lookups: &[Lookup<'_>]) -> Result<Vec<Example>> {
        self.check(config)?;
        let fusion = config.fusion;
        let mut missing = Vec::new();
        let mut seen = HashSet::new();
        let mut note = |kind: &str, key: &str| {
            let k = format!("{kind}:{key}");
            if seen.insert(k.clone()) {
                missing.push(k);
            }
        };
        for l in lookups {
            if fusion.uses_text() && l.text.is_none() {
                return Err(Error::InvalidRecord(format!("{} has no src_text", l.what)));
            }
            if fusion.uses_speech() && l.audio.is_none() {
                return Err(Error::InvalidRecord(format!("{} has no audio_key", l.what)));
            }
            if !self.hypothesis.contains_key(l.hypothesis) {
                note("hypothesis", l.hypothesis);
            }
            if let (true, Some(key), Some(store)) = (fusion.uses_text(), l.text, self.text) {
                if !store.contains_key(key) {
                    note("text", key);
                }
            }
            if let (true, Some(key), Some(store)) = (fusion.uses_speech(), l.audio, self.audio) {
                if !store.contains_key(key) {
                    note("audio", key);
                }
            }
        }
        if !missing.is_empty() {
            return Err(Error::MissingEmbeddings(missing));
        }
        let sentence = |store: &EmbeddingStore, key: &str| -> Array1<f64> {
            let frames = store.get(key).expect("checked above");
            frames.mapv(f64::from).mean_axis(Axis(0)).expect("frames >= 1")
        };
        Ok(lookups
            .iter()
            .map(|l| Example {
                hypothesis: sentence(self.hypothesis, l.hypothesis),
                text: fusion
                    .uses_text()
                    .then(|| sentence(self.text.expect("checked"), l.text.expect("checked"))),
                audio: fusion.uses_speech().then(|| {
                    let store = self.audio.expect("checked");
                    store.get(l.audio.expect("checked")).expect("checked").mapv(f64::from)
                }),
            })
            .collect())
    }

    /// Resolves every record of a corpus. Missing keys are reported together.
    pub fn resolve_records(&self, config: &EstimatorConfig, records: &[SegmentRecord]) -> Result<Vec<Example>> {
        let lookups: Vec<Lookup<'_>> = records
            .iter()
            .map(|r| Lookup {
                what: format!("record ({}, {})", r.seg_id, r.system_id),
                hypothesis: &r.mt_text,
                text: r.src_text.as_deref(),
                audio: r.audio_key.as_deref(),
            })
            .collect();
        self.resolve(config, &lookups)
    }

    /// Resolves both sides of each contrastive pair; the result alternates
    /// correct and incorrect translations.
    pub fn resolve_pairs(&self, config: &EstimatorConfig, pairs: &[ContrastivePair]) -> Result<Vec<Example>> {
        let lookups: Vec<Lookup<'_>> = pairs
            .iter()
            .flat_map(|p| {
                [&p.mt_correct, &p.mt_incorrect].map(|mt| Lookup {
                    what: format!("pair {}", p.pair_id),
                    hypothesis: mt,
                    text: p.src_text.as_deref(),
                    audio: p.audio_key.as_deref(),
                })
            })
            .collect();
        self.resolve(config, &lookups)
    }
}

/// Scores every record of `corpus` in evaluation mode.
pub fn predict(model: &EstimatorModel, corpus: &Corpus, sources: &EmbeddingSources<'_>) -> Result<ScoreMatrix> {
    let examples = sources.resolve_records(model.config(), corpus.records())?;
    let scores = model.predict_examples(&examples)?;
    ScoreMatrix::from_entries(
        corpus
            .records()
            .iter()
            .zip(scores)
            .map(|(r, y)| (r.seg_id.clone(), r.system_id.clone(), y)),
    )
}

/// `(ŷ⁺, ŷ⁻)` for each contrastive pair, ready for the pairwise accuracy.
pub fn predict_contrastive(
    model: &EstimatorModel,
    pairs: &[ContrastivePair],
    sources: &EmbeddingSources<'_>,
) -> Result<Vec<(f64, f64)>> {
    let examples = sources.resolve_pairs(model.config(), pairs)?;
    let scores = model.predict_examples(&examples)?;
    Ok(scores.chunks(2).map(|c| (c[0], c[1])).collect())
}
