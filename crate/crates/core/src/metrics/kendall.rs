use serde::{Deserialize, Serialize};

use crate::corpus::ScoreMatrix;
use crate::error::{Error, Result};

/// Segment-level correlation averaged over source segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauResult {
    /// Unweighted mean of per-segment τ_b; `None` when no group was usable.
    pub value: Option<f64>,
    pub n_groups_used: usize,
    pub n_groups_skipped: usize,
}

/// Kendall's τ_b between two paired samples.
///
/// `τ_b = (C − D) / sqrt((C + D + T_x)(C + D + T_y))`, where `T_x` and `T_y`
/// count pairs tied only in `x` or only in `y`. Returns `Ok(None)` when
/// either sample is constant, because the denominator vanishes.
///
/// Uses Knight's O(n log n) algorithm: sort by `(x, y)`, then count the
/// discordant pairs as the number of swaps a stable merge sort on `y`
/// performs.
///
/// ```
/// let tau = qeme::metrics::tau_b(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
/// assert!((tau.unwrap() - 2.0 / 3.0).abs() < 1e-15);
/// assert_eq!(qeme::metrics::tau_b(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap(), None);
/// ```
pub fn tau_b(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::TooShort { needed: 2, got: n });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("tau_b inputs must be finite".into()));
    }
    let cmp = |a: f64, b: f64| a.partial_cmp(&b).expect("finite");

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| cmp(x[i], x[j]).then(cmp(y[i], y[j])));

    let total = pairs(n as u64);
    let mut tied_x = 0u64;
    let mut tied_xy = 0u64;
    let (mut run_x, mut run_xy) = (1u64, 1u64);
    for w in order.windows(2) {
        let (i, j) = (w[0], w[1]);
        if x[i] == x[j] {
            run_x += 1;
            if y[i] == y[j] {
                run_xy += 1;
            } else {
                tied_xy += pairs(run_xy);
                run_xy = 1;
            }
        } else {
            tied_x += pairs(run_x);
            tied_xy += pairs(run_xy);
            run_x = 1;
            run_xy = 1;
        }
    }
    tied_x += pairs(run_x);
    tied_xy += pairs(run_xy);

    let mut ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let mut scratch = vec![0.0; n];
    let swaps = merge_count(&mut ys, &mut scratch);

    let mut tied_y = 0u64;
    let mut run_y = 1u64;
    for w in ys.windows(2) {
        if w[0] == w[1] {
            run_y += 1;
        } else {
            tied_y += pairs(run_y);
            run_y = 1;
        }
    }
    tied_y += pairs(run_y);

    if tied_x == total || tied_y == total {
        return Ok(None);
    }
    let numerator = total as i64 - tied_x as i64 - tied_y as i64 + tied_xy as i64 - 2 * swaps as i64;
    let denominator = (((total - tied_x) as f64) * ((total - tied_y) as f64)).sqrt();
    Ok(Some(numerator as f64 / denominator))
}

fn pairs(k: u64) -> u64 {
    k * k.saturating_sub(1) / 2
}

// Bottom-up merge sort counting strict inversions.
fn merge_count(v: &mut [f64], scratch: &mut [f64]) -> u64 {
    let n = v.len();
    let mut swaps = 0u64;
    let mut width = 1;
    while width < n {
        let mut lo = 0;
        while lo < n {
            let mid = (lo + width).min(n);
            let hi = (lo + 2 * width).min(n);
            let (mut i, mut j, mut k) = (lo, mid, lo);
            while i < mid && j < hi {
                if v[j] < v[i] {
                    scratch[k] = v[j];
                    swaps += (mid - i) as u64;
                    j += 1;
                } else {
                    scratch[k] = v[i];
                    i += 1;
                }
                k += 1;
            }
            scratch[k..k + (mid - i)].copy_from_slice(&v[i..mid]);
            k += mid - i;
            scratch[k..k + (hi - j)].copy_from_slice(&v[j..hi]);
            v[lo..hi].copy_from_slice(&scratch[lo..hi]);
            lo = hi;
        }
        width *= 2;
    }
    swaps
}

/// Segment-level τ_b: within each source segment, correlate human and metric
/// scores across the systems that have both, then average over segments.
///
/// Groups with fewer than two complete cells, or with an undefined τ_b
/// (constant human or metric scores), are skipped and counted.
pub fn segment_tau(human: &ScoreMatrix, metric: &ScoreMatrix) -> TauResult {
    let mut sum = 0.0;
    let mut used = 0usize;
    let mut skipped = 0usize;
    for seg in human.segments() {
        let (mut h, mut m) = (Vec::new(), Vec::new());
        for sys in human.systems() {
            if let (Some(a), Some(b)) = (human.get(seg, sys), metric.get(seg, sys)) {
                h.push(a);
                m.push(b);
            }
        }
        match (h.len() >= 2).then(|| tau_b(&h, &m)) {
            Some(Ok(Some(t))) => {
                sum += t;
                used += 1;
            }
            _ => skipped += 1,
        }
    }
    TauResult {
        value: (used > 0).then(|| sum / used as f64),
        n_groups_used: used,
        n_groups_skipped: skipped,
    }
}
