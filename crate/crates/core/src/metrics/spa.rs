use serde::{Deserialize, Serialize};

use super::permutation::{pairwise_p, PermutationConfig};
use crate::corpus::ScoreMatrix;
use crate::error::{Error, Result};

/// One system comparison inside an SPA computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaPair {
    pub system_a: String,
    pub system_b: String,
    pub p_human: f64,
    pub p_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaResult {
    pub value: f64,
    pub pair_table: Vec<SpaPair>,
}

/// Soft pairwise accuracy between human and metric system rankings.
///
/// For every unordered pair of systems (in the human matrix's system order)
/// the segments scored for both systems by both the human and the metric
/// matrix form a paired sample. A permutation-test p-value is computed from
/// the human scores and from the metric scores, and the result is the mean
/// of `1 - |p_human - p_metric|`.
pub fn spa(human: &ScoreMatrix, metric: &ScoreMatrix, cfg: &PermutationConfig) -> Result<SpaResult> {
    let systems = human.systems();
    if systems.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "system-level accuracy needs at least 2 systems, found {}",
            systems.len()
        )));
    }
    let mut pair_table = Vec::with_capacity(systems.len() * (systems.len() - 1) / 2);
    for (i, sa) in systems.iter().enumerate() {
        for sb in &systems[i + 1..] {
            let (mut ha, mut hb, mut ma, mut mb) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for seg in human.segments() {
                let cells = (
                    human.get(seg, sa),
                    human.get(seg, sb),
                    metric.get(seg, sa),
                    metric.get(seg, sb),
                );
                if let (Some(w), Some(x), Some(y), Some(z)) = cells {
                    ha.push(w);
                    hb.push(x);
                    ma.push(y);
                    mb.push(z);
                }
            }
            if ha.len() < 2 {
                return Err(Error::InvalidInput(format!(
                    "systems {sa} and {sb} share {} fully scored segments, need at least 2",
                    ha.len()
                )));
            }
            pair_table.push(SpaPair {
                system_a: sa.clone(),
                system_b: sb.clone(),
                p_human: pairwise_p(&ha, &hb, cfg)?,
                p_metric: pairwise_p(&ma, &mb, cfg)?,
            });
        }
    }
    let value = pair_table
        .iter()
        .map(|p| 1.0 - (p.p_human - p.p_metric).abs())
        .sum::<f64>()
        / pair_table.len() as f64;
    Ok(SpaResult { value, pair_table })
}
