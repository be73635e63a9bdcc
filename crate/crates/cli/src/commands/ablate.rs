use std::path::PathBuf;

use clap::{Args, ValueEnum};
use qeme::ablation::{apply_shuffle, make_shuffle, render_table, report, AblationReport, AblationRow, Modality};
use qeme::corpus::ScoreMatrix;
use qeme::estimator::{predict, EstimatorModel};
use rayon::prelude::*;
use serde::Serialize;

use super::{file_stem, load_corpus, load_scores, read_config, thread_pool, EmbeddingArgs, Stores};
use crate::manifest::RunManifest;
use crate::output::OutDir;
use crate::{CmdResult, Common, Failure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModalityArg {
    Text,
    Audio,
    Both,
    All,
}

impl ModalityArg {
    fn modalities(self) -> Vec<Modality> {
        match self {
            ModalityArg::Text => vec![Modality::Text],
            ModalityArg::Audio => vec![Modality::Audio],
            ModalityArg::Both => vec![Modality::Both],
            ModalityArg::All => Modality::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Corpus with human scores.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    pub modality: ModalityArg,
    /// Trained checkpoint used to score the real and shuffled corpora.
    #[arg(long, requires = "hyp_emb", conflicts_with_all = ["scores_real", "scores_shuffled"])]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub hyp_emb: Option<PathBuf>,
    #[arg(long)]
    pub text_emb: Option<PathBuf>,
    #[arg(long)]
    pub audio_emb: Option<PathBuf>,
    /// Externally computed scores of the real corpus.
    #[arg(long, requires = "scores_shuffled")]
    pub scores_real: Option<PathBuf>,
    /// Externally computed scores of the shuffled corpus written by an
    /// earlier plan-only run with the same seed and modality.
    #[arg(long, requires = "scores_real")]
    pub scores_shuffled: Option<PathBuf>,
    /// Row label in the table; defaults to the model or score file stem.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Serialize)]
struct Report<'a> {
    kind: &'static str,
    model: &'a str,
    reports: &'a [AblationReport],
}

/// Writes `plan_<m>.json` and `shuffled_<m>.jsonl` per modality. With a
/// model or external scores it also writes `ablation.json` and
/// `ablation.tsv`; without either it stops after the plans.
pub fn run(args: AblateArgs) -> CmdResult {
    let mut manifest = RunManifest::new("ablate");
    if read_config(args.common.config.as_deref(), &mut manifest)?.is_some() {
        return Err(Failure::usage("ablate takes no configuration file"));
    }
    let seed = args.common.seed_or_default();
    manifest.seeds.push(seed);
    let modalities = args.modality.modalities();
    manifest.set("modality", format!("{:?}", args.modality).to_lowercase());
    if args.scores_real.is_some() && modalities.len() != 1 {
        return Err(Failure::usage("external scores cover one shuffled corpus; pick a single --modality"));
    }
    let corpus = load_corpus(&args.corpus, &mut manifest)?;
    let human = corpus.human_scores()?;
    let out = OutDir::create(&args.common.out_dir)?;

    let mut shuffled = Vec::with_capacity(modalities.len());
    for &m in &modalities {
        let plan = make_shuffle(&corpus, m, seed)?;
        let s = apply_shuffle(&corpus, &plan)?;
        out.write_json(&format!("plan_{m}.json"), &plan)?;
        s.write_jsonl(out.path(&format!("shuffled_{m}.jsonl")))?;
        shuffled.push((m, s));
    }

    let (name, reports) = if let Some(model_path) = &args.model {
        manifest.input(model_path)?;
        let model = EstimatorModel::load(model_path)?;
        manifest.extend(&model.config().to_kv());
        let emb = EmbeddingArgs {
            hyp_emb: args.hyp_emb.clone().expect("required by clap"),
            text_emb: args.text_emb.clone(),
            audio_emb: args.audio_emb.clone(),
        };
        let stores = Stores::load(&emb, &mut manifest)?;
        let sources = stores.sources();
        let pool = thread_pool(args.common.jobs)?;
        let real = predict(&model, &corpus, &sources)?;
        let reports = pool.install(|| {
            shuffled
                .par_iter()
                .map(|(m, s)| report(&human, &real, &predict(&model, s, &sources)?, *m, seed))
                .collect::<qeme::Result<Vec<_>>>()
        })?;
        (args.name.clone().unwrap_or_else(|| file_stem(model_path)), reports)
    } else if let (Some(real_path), Some(shuf_path)) = (&args.scores_real, &args.scores_shuffled) {
        let real: ScoreMatrix = load_scores(real_path, &mut manifest)?;
        let shuf = load_scores(shuf_path, &mut manifest)?;
        let r = report(&human, &real, &shuf, modalities[0], seed)?;
        (args.name.clone().unwrap_or_else(|| file_stem(real_path)), vec![r])
    } else {
        return out.finish(&manifest);
    };

    manifest.set("name", &name);
    out.write_json(
        "ablation.json",
        &Report {
            kind: "ablation",
            model: &name,
            reports: &reports,
        },
    )?;
    out.write("ablation.tsv", render_table(&[AblationRow { model: name, reports }]))?;
    out.finish(&manifest)
}
