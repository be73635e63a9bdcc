use std::path::PathBuf;

use clap::Args;
use qeme::estimator::{train, EpochRecord, EstimatorConfig, EstimatorModel};
use qeme::kv;
use serde::Serialize;

use super::{load_corpus, read_config, EmbeddingArgs, Stores};
use crate::manifest::RunManifest;
use crate::output::OutDir;
use crate::{CmdResult, Common, Failure};

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Training corpus with human scores.
    #[arg(long)]
    pub train: PathBuf,
    /// Validation corpus used for model selection.
    #[arg(long)]
    pub val: PathBuf,
    #[command(flatten)]
    pub embeddings: EmbeddingArgs,
}

#[derive(Serialize)]
struct History<'a> {
    kind: &'static str,
    best_epoch: Option<usize>,
    stopped_early: bool,
    epochs: &'a [EpochRecord],
}

#[derive(Serialize)]
struct Timing<'a> {
    epoch_seconds: &'a [f64],
}

/// Writes `model.sqec`, `history.json`, the resolved `config.cfg`, and
/// `timing.json`. Only the timing file varies between identical runs.
pub fn run(args: TrainArgs) -> CmdResult {
    let mut manifest = RunManifest::new("train");
    let Some(text) = read_config(args.common.config.as_deref(), &mut manifest)? else {
        return Err(Failure::usage("train needs --config (at least `dim = N`)"));
    };
    let mut config = EstimatorConfig::from_kv_str(&text)?;
    if let Some(seed) = args.common.seed {
        config.seed = seed;
    }
    manifest.extend(&config.to_kv());
    manifest.seeds.push(config.seed);

    let train_set = load_corpus(&args.train, &mut manifest)?;
    let val_set = load_corpus(&args.val, &mut manifest)?;
    let stores = Stores::load(&args.embeddings, &mut manifest)?;
    let out = OutDir::create(&args.common.out_dir)?;

    log::info!(
        "training {} fusion on {} records, validating on {}",
        config.fusion,
        train_set.len(),
        val_set.len()
    );
    let model = EstimatorModel::new(config.clone())?;
    let outcome = train(model, &train_set, &val_set, &stores.sources())?;

    outcome.model.save(out.path("model.sqec"))?;
    out.write_json(
        "history.json",
        &History {
            kind: "train",
            best_epoch: outcome.best_epoch,
            stopped_early: outcome.stopped_early,
            epochs: &outcome.history,
        },
    )?;
    out.write("config.cfg", kv::render(&config.to_kv()))?;
    out.write_json(
        "timing.json",
        &Timing {
            epoch_seconds: &outcome.epoch_seconds,
        },
    )?;
    out.finish(&manifest)
}
