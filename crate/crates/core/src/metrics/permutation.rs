use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Settings of the paired sign-flip permutation test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationConfig {
    /// Largest sample size enumerated exhaustively (2^n flips).
    pub exhaustive_max: usize,
    /// Sampled flips for larger samples.
    pub n_permutations: usize,
    pub seed: u64,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        PermutationConfig {
            exhaustive_max: 12,
            n_permutations: 1000,
            seed: 0,
        }
    }
}

/// Two-sided p-value of a paired sign-flip permutation test on the mean of
/// `a[i] - b[i]`.
///
/// For `n <= cfg.exhaustive_max` every one of the `2^n` sign patterns is
/// enumerated. Otherwise `cfg.n_permutations` random patterns are drawn from
/// a generator seeded with `cfg.seed`, and the identity pattern is counted as
/// one extra sample, so `p = (1 + hits) / (1 + n_permutations)`.
///
/// ```
/// use qeme::metrics::{pairwise_p, PermutationConfig};
/// let a = [1.0; 6];
/// let b = [0.0; 6];
/// // Only the all-plus and all-minus patterns reach |mean| = 1.
/// assert_eq!(pairwise_p(&a, &b, &PermutationConfig::default()).unwrap(), 2.0 / 64.0);
/// ```
pub fn pairwise_p(a: &[f64], b: &[f64], cfg: &PermutationConfig) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::TooShort { needed: 2, got: n });
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::InvalidInput("permutation test inputs must be finite".into()));
    }

    // Sums are compared instead of means; the slack absorbs summation-order
    // rounding so that mathematically equal magnitudes count as ties.
    let observed: f64 = diffs.iter().sum::<f64>().abs();
    let scale: f64 = diffs.iter().map(|d| d.abs()).sum();
    let slack = scale * (n as f64) * 4.0 * f64::EPSILON;
    let reaches = |s: f64| s.abs() >= observed - slack;

    if n <= cfg.exhaustive_max.min(30) {
        let patterns = 1u64 << n;
        let hits = (0..patterns)
            .filter(|mask| {
                let s: f64 = diffs
                    .iter()
                    .enumerate()
                    .map(|(i, d)| if mask >> i & 1 == 1 { -d } else { *d })
                    .sum();
                reaches(s)
            })
            .count();
        Ok(hits as f64 / patterns as f64)
    } else {
        if cfg.n_permutations == 0 {
            return Err(Error::Config("n_permutations must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut hits = 1usize;
        for _ in 0..cfg.n_permutations {
            let s: f64 = diffs
                .iter()
                .map(|d| if rng.random::<bool>() { -d } else { *d })
                .sum();
            if reaches(s) {
                hits += 1;
            }
        }
        Ok(hits as f64 / (cfg.n_permutations + 1) as f64)
    }
}
