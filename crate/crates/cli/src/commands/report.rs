use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;
use std::fs;
use std::path::PathBuf;

use clap::Args;
use qeme::ablation::{render_table, AblationReport, AblationRow};
use qeme::metrics::{PaResult, SpaResult, TauResult};
use qeme::probing::ProbeResult;
use serde::Deserialize;

use super::probe::render_rows;
use super::{cell, read_config};
use crate::manifest::RunManifest;
use crate::output::OutDir;
use crate::{CmdResult, Common, Failure};

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: Common,
    /// JSON reports written by `evaluate`, `ablate`, or `probe`.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum AnyReport {
    Evaluate {
        metric: String,
        segment: Option<TauResult>,
        system: Option<SpaResult>,
    },
    Contrastive {
        metric: String,
        overall: PaResult,
        by_phenomenon: BTreeMap<String, PaResult>,
    },
    Ablation {
        model: String,
        reports: Vec<AblationReport>,
    },
    Probe {
        rows: Vec<ProbeResult>,
    },
}

/// Collects reports into one table per kind: `correlation.tsv`,
/// `contrastive.tsv`, `ablation.tsv`, `probe.tsv`. Rows follow input order.
pub fn run(args: ReportArgs) -> CmdResult {
    let mut manifest = RunManifest::new("report");
    if read_config(args.common.config.as_deref(), &mut manifest)?.is_some() {
        return Err(Failure::usage("report takes no configuration file"));
    }
    manifest.seeds.push(args.common.seed_or_default());

    let mut correlation = String::new();
    let mut contrastive: Vec<(String, PaResult, BTreeMap<String, PaResult>)> = Vec::new();
    let mut ablation = Vec::new();
    let mut probe = Vec::new();
    for path in &args.inputs {
        manifest.input(path)?;
        let text =
            fs::read_to_string(path).map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
        let report: AnyReport = serde_json::from_str(&text)
            .map_err(|e| Failure::input(format!("{}: not a report: {e}", path.display())))?;
        match report {
            AnyReport::Evaluate { metric, segment, system } => {
                writeln!(
                    correlation,
                    "{metric}\t{}\t{}",
                    cell(segment.and_then(|s| s.value)),
                    cell(system.map(|s| s.value))
                )
                .unwrap();
            }
            AnyReport::Contrastive {
                metric,
                overall,
                by_phenomenon,
            } => contrastive.push((metric, overall, by_phenomenon)),
            AnyReport::Ablation { model, reports } => ablation.push(AblationRow { model, reports }),
            AnyReport::Probe { rows } => probe.extend(rows),
        }
    }

    let out = OutDir::create(&args.common.out_dir)?;
    if !correlation.is_empty() {
        out.write("correlation.tsv", format!("metric\tsegment_tau\tspa\n{correlation}"))?;
    }
    if !contrastive.is_empty() {
        out.write("contrastive.tsv", contrastive_table(&contrastive))?;
    }
    if !ablation.is_empty() {
        out.write("ablation.tsv", render_table(&ablation))?;
    }
    if !probe.is_empty() {
        out.write("probe.tsv", render_rows(&probe))?;
    }
    out.finish(&manifest)
}

/// One row per metric, one column per phenomenon, then the overall PA.
fn contrastive_table(rows: &[(String, PaResult, BTreeMap<String, PaResult>)]) -> String {
    let phenomena: BTreeSet<&str> = rows
        .iter()
        .flat_map(|(_, _, by)| by.keys().map(String::as_str))
        .collect();
    let mut out = String::from("metric");
    for p in &phenomena {
        write!(out, "\t{p}").unwrap();
    }
    out.push_str("\tall\n");
    for (metric, overall, by) in rows {
        out.push_str(metric);
        for p in &phenomena {
            write!(out, "\t{}", cell(by.get(*p).map(|r| r.value))).unwrap();
        }
        writeln!(out, "\t{}", cell(Some(overall.value))).unwrap();
    }
    out
}
