use std::collections::BTreeMap;
use std::fmt::Write;
use std::fs;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use qeme::corpus::load_contrastive;
use qeme::metrics::{contrastive_pa, segment_tau, spa, PaResult, PermutationConfig, SpaResult, TauResult};
use serde::Serialize;

use super::contrastive_scores::{align, parse_contrastive_scores};
use super::{cell, file_stem, load_scores, read_config};
use crate::manifest::RunManifest;
use crate::output::OutDir;
use crate::{CmdResult, Common, Failure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Level {
    Segment,
    System,
    All,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Human scores: a `seg_id, system_id, score` TSV or a corpus JSONL.
    #[arg(long, requires = "metric", conflicts_with_all = ["contrastive", "scores"])]
    pub human: Option<PathBuf>,
    /// Metric scores in the same formats as `--human`.
    #[arg(long, requires = "human")]
    pub metric: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "all")]
    pub level: Level,
    /// Contrastive pairs (JSONL).
    #[arg(long, requires = "scores")]
    pub contrastive: Option<PathBuf>,
    /// Contrastive scores: `pair_id, correct|incorrect, score`.
    #[arg(long, requires = "contrastive")]
    pub scores: Option<PathBuf>,
    /// Sampled sign patterns per system pair when the test is not exhaustive.
    #[arg(long, default_value_t = 1000)]
    pub permutations: usize,
}

#[derive(Serialize)]
struct CorrelationReport<'a> {
    kind: &'static str,
    metric: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    segment: Option<&'a TauResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    system: Option<&'a SpaResult>,
}

#[derive(Serialize)]
struct ContrastiveReport<'a> {
    kind: &'static str,
    metric: &'a str,
    overall: &'a PaResult,
    by_phenomenon: &'a BTreeMap<String, PaResult>,
}

pub fn run(args: EvaluateArgs) -> CmdResult {
    let mut manifest = RunManifest::new("evaluate");
    if read_config(args.common.config.as_deref(), &mut manifest)?.is_some() {
        return Err(Failure::usage("evaluate takes no configuration file"));
    }
    let seed = args.common.seed_or_default();
    manifest.seeds.push(seed);
    let out = OutDir::create(&args.common.out_dir)?;

    if let (Some(human), Some(metric)) = (&args.human, &args.metric) {
        let name = file_stem(metric);
        manifest.set("level", format!("{:?}", args.level).to_lowercase());
        manifest.set("permutations", args.permutations);
        let h = load_scores(human, &mut manifest)?;
        let m = load_scores(metric, &mut manifest)?;
        let segment = matches!(args.level, Level::Segment | Level::All).then(|| segment_tau(&h, &m));
        let system = if matches!(args.level, Level::System | Level::All) {
            let cfg = PermutationConfig {
                n_permutations: args.permutations,
                seed,
                ..PermutationConfig::default()
            };
            Some(spa(&h, &m, &cfg)?)
        } else {
            None
        };
        out.write_json(
            "report.json",
            &CorrelationReport {
                kind: "evaluate",
                metric: &name,
                segment: segment.as_ref(),
                system: system.as_ref(),
            },
        )?;
        let mut tsv = String::from("metric\tsegment_tau\tspa\n");
        writeln!(
            tsv,
            "{name}\t{}\t{}",
            cell(segment.as_ref().and_then(|s| s.value)),
            cell(system.as_ref().map(|s| s.value))
        )
        .unwrap();
        out.write("report.tsv", tsv)?;
        if let Some(s) = &system {
            let mut pairs = String::from("system_a\tsystem_b\tp_human\tp_metric\n");
            for p in &s.pair_table {
                writeln!(pairs, "{}\t{}\t{:?}\t{:?}", p.system_a, p.system_b, p.p_human, p.p_metric).unwrap();
            }
            out.write("spa_pairs.tsv", pairs)?;
        }
    } else if let (Some(pairs_path), Some(scores_path)) = (&args.contrastive, &args.scores) {
        let name = file_stem(scores_path);
        manifest.input(pairs_path)?;
        manifest.input(scores_path)?;
        let pairs = load_contrastive(pairs_path)?;
        let text = fs::read_to_string(scores_path)
            .map_err(|e| Failure::input(format!("cannot read {}: {e}", scores_path.display())))?;
        let scores = align(&pairs, parse_contrastive_scores(scores_path, &text)?)?;
        let overall = contrastive_pa(&scores)?;
        let mut groups: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
        for (p, s) in pairs.iter().zip(&scores) {
            groups.entry(p.phenomenon.as_str()).or_default().push(*s);
        }
        let by_phenomenon = groups
            .into_iter()
            .map(|(k, v)| Ok((k.to_string(), contrastive_pa(&v)?)))
            .collect::<qeme::Result<BTreeMap<_, _>>>()?;
        out.write_json(
            "contrastive.json",
            &ContrastiveReport {
                kind: "contrastive",
                metric: &name,
                overall: &overall,
                by_phenomenon: &by_phenomenon,
            },
        )?;
        let mut tsv = String::from("metric\tphenomenon\tpa\tpa_excl_ties\tn_pairs\tn_ties\n");
        for (ph, r) in by_phenomenon.iter().map(|(k, v)| (k.as_str(), v)).chain([("all", &overall)]) {
            writeln!(
                tsv,
                "{name}\t{ph}\t{}\t{}\t{}\t{}",
                cell(Some(r.value)),
                cell(r.value_excl_ties),
                r.n_pairs,
                r.n_ties
            )
            .unwrap();
        }
        out.write("contrastive.tsv", tsv)?;
    } else {
        return Err(Failure::usage(
            "evaluate needs --human and --metric, or --contrastive and --scores",
        ));
    }
    out.finish(&manifest)
}
