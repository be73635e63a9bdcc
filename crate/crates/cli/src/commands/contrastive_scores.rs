//! Score files for contrastive sets: `pair_id<TAB>role<TAB>score` with role
//! `correct` or `incorrect`, each pair listed exactly once per role.

use std::collections::HashMap;
use std::fmt::Write;
use std::path::Path;

use qeme::corpus::ContrastivePair;
use qeme::{Error, Result};

const HEADER: &str = "pair_id\trole\tscore";

/// Parses a contrastive score file into `(pair_id, correct, incorrect)`
/// triples in order of first appearance. The header row is optional.
pub fn parse_contrastive_scores(path: &Path, text: &str) -> Result<Vec<(String, f64, f64)>> {
    let mut order: Vec<String> = Vec::new();
    let mut cells: HashMap<String, [Option<f64>; 2]> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() || (line_no == 1 && line == HEADER) {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(err(format!("expected 3 tab-separated columns, found {}", cols.len())));
        }
        let role = match cols[1] {
            "correct" => 0,
            "incorrect" => 1,
            other => return Err(err(format!("role must be correct or incorrect, found {other:?}"))),
        };
        let score: f64 = cols[2]
            .trim()
            .parse()
            .map_err(|_| err(format!("invalid score {:?}", cols[2])))?;
        if !score.is_finite() {
            return Err(err(format!("non-finite score {score}")));
        }
        let entry = cells.entry(cols[0].to_string()).or_insert_with(|| {
            order.push(cols[0].to_string());
            [None, None]
        });
        if entry[role].replace(score).is_some() {
            return Err(Error::DuplicateKey {
                path: path.to_path_buf(),
                line: line_no,
                key: format!("({}, {})", cols[0], cols[1]),
            });
        }
    }
    order
        .into_iter()
        .map(|id| match cells[&id] {
            [Some(c), Some(w)] => Ok((id, c, w)),
            _ => Err(Error::InvalidInput(format!(
                "{}: pair {id} needs both a correct and an incorrect score",
                path.display()
            ))),
        })
        .collect()
}

/// Renders scores for `pairs` in their order.
pub fn render_contrastive_scores(pairs: &[ContrastivePair], scores: &[(f64, f64)]) -> String {
    let mut out = format!("{HEADER}\n");
    for (p, (c, w)) in pairs.iter().zip(scores) {
        writeln!(out, "{}\tcorrect\t{c:?}", p.pair_id).unwrap();
        writeln!(out, "{}\tincorrect\t{w:?}", p.pair_id).unwrap();
    }
    out
}

/// Lines the scores up with `pairs`; every pair must be scored.
pub(crate) fn align(pairs: &[ContrastivePair], scores: Vec<(String, f64, f64)>) -> Result<Vec<(f64, f64)>> {
    let by_id: HashMap<String, (f64, f64)> = scores.into_iter().map(|(id, c, w)| (id, (c, w))).collect();
    let missing: Vec<&str> = pairs
        .iter()
        .filter(|p| !by_id.contains_key(&p.pair_id))
        .map(|p| p.pair_id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::InvalidInput(format!("no scores for pairs: {}", missing.join(", "))));
    }
    Ok(pairs.iter().map(|p| by_id[&p.pair_id]).collect())
}
