pub mod ablate;
pub mod contrastive_scores;
pub mod evaluate;
pub mod predict;
pub mod probe;
pub mod report;
pub mod synth;
pub mod train;

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use qeme::corpus::{load_segments, read_embeddings, Corpus, CorpusFormat, EmbeddingStore, ScoreMatrix};
use qeme::estimator::EmbeddingSources;

use crate::manifest::RunManifest;
use crate::{CmdResult, Command, Failure};

pub fn dispatch(command: Command) -> CmdResult {
    match command {
        Command::Evaluate(a) => evaluate::run(a),
        Command::Train(a) => train::run(a),
        Command::Predict(a) => predict::run(a),
        Command::Probe(a) => probe::run(a),
        Command::Ablate(a) => ablate::run(a),
        Command::Report(a) => report::run(a),
        Command::Synth(a) => synth::run(a),
    }
}

pub(crate) fn thread_pool(jobs: usize) -> CmdResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Failure::other(format!("cannot start worker threads: {e}")))
}

/// Reads the `--config` file, recording its digest.
pub(crate) fn read_config(path: Option<&Path>, manifest: &mut RunManifest) -> CmdResult<Option<String>> {
    let Some(path) = path else {
        return Ok(None);
    };
    manifest.input(path)?;
    fs::read_to_string(path)
        .map(Some)
        .map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))
}

pub(crate) fn load_corpus(path: &Path, manifest: &mut RunManifest) -> CmdResult<Corpus> {
    manifest.input(path)?;
    Ok(load_segments(path, CorpusFormat::from_path(path))?)
}

/// A `.tsv` path is a `seg_id, system_id, score` table; anything else is a
/// corpus whose `human_score` fields are read.
pub(crate) fn load_scores(path: &Path, manifest: &mut RunManifest) -> CmdResult<ScoreMatrix> {
    manifest.input(path)?;
    if CorpusFormat::from_path(path) == CorpusFormat::Tsv {
        Ok(ScoreMatrix::read_tsv(path)?)
    } else {
        Ok(load_segments(path, CorpusFormat::Jsonl)?.human_scores()?)
    }
}

#[derive(Debug, Clone, Args)]
pub struct EmbeddingArgs {
    /// Hypothesis embeddings, keyed by `mt_text`.
    #[arg(long)]
    pub hyp_emb: PathBuf,
    /// Text source embeddings, keyed by `src_text`.
    #[arg(long)]
    pub text_emb: Option<PathBuf>,
    /// Speech source embeddings, keyed by `audio_key`.
    #[arg(long)]
    pub audio_emb: Option<PathBuf>,
}

pub(crate) struct Stores {
    hypothesis: EmbeddingStore,
    text: Option<EmbeddingStore>,
    audio: Option<EmbeddingStore>,
}

impl Stores {
    pub(crate) fn load(args: &EmbeddingArgs, manifest: &mut RunManifest) -> CmdResult<Self> {
        let mut read = |p: &Path| -> CmdResult<EmbeddingStore> {
            manifest.input(p)?;
            Ok(read_embeddings(p)?)
        };
        Ok(Stores {
            hypothesis: read(&args.hyp_emb)?,
            text: args.text_emb.as_deref().map(&mut read).transpose()?,
            audio: args.audio_emb.as_deref().map(&mut read).transpose()?,
        })
    }

    pub(crate) fn sources(&self) -> EmbeddingSources<'_> {
        EmbeddingSources {
            hypothesis: &self.hypothesis,
            text: self.text.as_ref(),
            audio: self.audio.as_ref(),
        }
    }
}

pub(crate) fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Fixed-precision cell; `-` for undefined values.
pub(crate) fn cell(v: Option<f64>) -> String {
    v.map_or("-".to_string(), |v| format!("{v:.4}"))
}
