use std::fmt::Write;
use std::path::PathBuf;

use clap::Args;
use qeme::probing::{load_probe_dataset, probe_accuracy_with, ProbeConfig, ProbeResult};
use rayon::prelude::*;
use serde::Serialize;

use super::{file_stem, read_config, thread_pool};
use crate::manifest::RunManifest;
use crate::output::OutDir;
use crate::{CmdResult, Common};

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Frozen representations (embedding container).
    #[arg(long)]
    pub reps: PathBuf,
    /// `key<TAB>label` rows naming the entries to probe.
    #[arg(long)]
    pub labels: PathBuf,
    /// Feature name for the report; defaults to the label file's stem.
    #[arg(long)]
    pub feature: Option<String>,
}

#[derive(Serialize)]
struct ProbeReport<'a> {
    kind: &'static str,
    rows: &'a [ProbeResult],
}

/// `--seed S` sets the split seed to `S` and the run seeds to `S, S+1, S+2`.
pub fn run(args: ProbeArgs) -> CmdResult {
    let mut manifest = RunManifest::new("probe");
    let mut cfg = match read_config(args.common.config.as_deref(), &mut manifest)? {
        Some(text) => ProbeConfig::from_kv_str(&text)?,
        None => ProbeConfig::default(),
    };
    if let Some(s) = args.common.seed {
        cfg.split_seed = s;
        cfg.seeds = (0..3).map(|i| s.wrapping_add(i)).collect();
    }
    let seeds: Vec<String> = cfg.seeds.iter().map(u64::to_string).collect();
    manifest.set("hidden", cfg.hidden);
    manifest.set("dropout", cfg.dropout);
    manifest.set("lr", cfg.lr);
    manifest.set("batch", cfg.batch);
    manifest.set("epochs", cfg.epochs);
    manifest.set("train_ratio", cfg.train_ratio);
    manifest.set("split_seed", cfg.split_seed);
    manifest.set("seeds", seeds.join(","));
    manifest.seeds = cfg.seeds.clone();

    manifest.input(&args.reps)?;
    manifest.input(&args.labels)?;
    let feature = args.feature.clone().unwrap_or_else(|| file_stem(&args.labels));
    manifest.set("feature", &feature);
    let dataset = load_probe_dataset(&args.reps, &args.labels)?;
    let out = OutDir::create(&args.common.out_dir)?;

    let pool = thread_pool(args.common.jobs)?;
    let mut result = probe_accuracy_with(&dataset, &cfg, |run| {
        pool.install(|| cfg.seeds.par_iter().map(|&s| run(s)).collect())
    })?;
    result.feature = feature;

    let rows = [result];
    out.write_json("probe.json", &ProbeReport { kind: "probe", rows: &rows })?;
    out.write("probe.tsv", render_rows(&rows))?;
    out.finish(&manifest)
}

pub(crate) fn render_rows(rows: &[ProbeResult]) -> String {
    let mut tsv = String::from("feature\tmean\tstd\tbaseline\tn_train\tn_test\n");
    for r in rows {
        writeln!(
            tsv,
            "{}\t{:.4}\t{:.4}\t{:.4}\t{}\t{}",
            r.feature, r.mean, r.std, r.baseline, r.n_train, r.n_test
        )
        .unwrap();
    }
    tsv
}
