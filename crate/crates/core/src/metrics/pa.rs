use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Contrastive pairwise accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaResult {
    /// Fraction of pairs where the correct translation scores strictly higher.
    pub value: f64,
    pub n_pairs: usize,
    pub n_ties: usize,
    /// Accuracy over non-tied pairs; `None` when every pair is tied.
    pub value_excl_ties: Option<f64>,
}

/// Scores `(correct, incorrect)` pairs. Ties count as failures; tie
/// detection is exact floating-point equality.
///
/// ```
/// use qeme::metrics::contrastive_pa;
/// let r = contrastive_pa(&[(1.0, 0.0), (1.0, 0.0), (1.0, 0.0), (0.0, 1.0)]).unwrap();
/// assert_eq!(r.value, 0.75);
/// ```
pub fn contrastive_pa(scores: &[(f64, f64)]) -> Result<PaResult> {
    if scores.is_empty() {
        return Err(Error::InvalidInput("no contrastive pairs to score".into()));
    }
    if scores.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(Error::InvalidInput("contrastive scores must be finite".into()));
    }
    let n = scores.len();
    let wins = scores.iter().filter(|(pos, neg)| pos > neg).count();
    let n_ties = scores.iter().filter(|(pos, neg)| pos == neg).count();
    Ok(PaResult {
        value: wins as f64 / n as f64,
        n_pairs: n,
        n_ties,
        value_excl_ties: (n_ties < n).then(|| wins as f64 / (n - n_ties) as f64),
    })
}
