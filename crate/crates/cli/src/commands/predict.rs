use std::path::PathBuf;

use clap::Args;
use qeme::corpus::load_contrastive;
use qeme::estimator::{predict, predict_contrastive, EstimatorModel};

use super::contrastive_scores::render_contrastive_scores;
use super::{load_corpus, read_config, EmbeddingArgs, Stores};
use crate::manifest::RunManifest;
use crate::output::OutDir;
use crate::{CmdResult, Common, Failure};

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub common: Common,
    /// Trained checkpoint.
    #[arg(long)]
    pub model: PathBuf,
    /// Corpus to score; writes `scores.tsv`.
    #[arg(long, required_unless_present = "contrastive")]
    pub corpus: Option<PathBuf>,
    /// Contrastive pairs to score; writes `contrastive_scores.tsv`.
    #[arg(long)]
    pub contrastive: Option<PathBuf>,
    #[command(flatten)]
    pub embeddings: EmbeddingArgs,
}

pub fn run(args: PredictArgs) -> CmdResult {
    let mut manifest = RunManifest::new("predict");
    if read_config(args.common.config.as_deref(), &mut manifest)?.is_some() {
        return Err(Failure::usage("predict takes its configuration from the checkpoint"));
    }
    manifest.seeds.push(args.common.seed_or_default());
    manifest.input(&args.model)?;
    let model = EstimatorModel::load(&args.model)?;
    manifest.extend(&model.config().to_kv());
    let corpus = args
        .corpus
        .as_deref()
        .map(|p| load_corpus(p, &mut manifest))
        .transpose()?;
    let pairs = match &args.contrastive {
        Some(p) => {
            manifest.input(p)?;
            Some(load_contrastive(p)?)
        }
        None => None,
    };
    let stores = Stores::load(&args.embeddings, &mut manifest)?;
    let out = OutDir::create(&args.common.out_dir)?;

    if let Some(corpus) = &corpus {
        out.write("scores.tsv", predict(&model, corpus, &stores.sources())?.to_tsv())?;
    }
    if let Some(pairs) = &pairs {
        let scores = predict_contrastive(&model, pairs, &stores.sources())?;
        out.write("contrastive_scores.tsv", render_contrastive_scores(pairs, &scores))?;
    }
    out.finish(&manifest)
}
