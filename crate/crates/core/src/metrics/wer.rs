use crate::error::{Error, Result};

/// Levenshtein distance over token sequences with unit costs.
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> usize {
    // Two-row dynamic program over the hypothesis.
    let mut prev: Vec<usize> = (0..=hypothesis.len()).collect();
    let mut curr = vec![0; hypothesis.len() + 1];
    for (i, r) in reference.iter().enumerate() {
        curr[0] = i + 1;
        for (j, h) in hypothesis.iter().enumerate() {
            let substitute = prev[j] + usize::from(r != h);
            curr[j + 1] = substitute.min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[hypothesis.len()]
}

/// Word error rate: edit distance divided by the reference length.
pub fn wer<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::InvalidInput("WER needs a non-empty reference".into()));
    }
    Ok(edit_distance(reference, hypothesis) as f64 / reference.len() as f64)
}

/// WER over whitespace tokens. No case or punctuation normalization.
///
/// ```
/// assert_eq!(qeme::metrics::wer_str("a b c", "a x c d").unwrap(), 2.0 / 3.0);
/// ```
pub fn wer_str(reference: &str, hypothesis: &str) -> Result<f64> {
    let r: Vec<&str> = reference.split_whitespace().collect();
    let h: Vec<&str> = hypothesis.split_whitespace().collect();
    wer(&r, &h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Memoized recursion over suffixes, independent of the row-based DP.
    fn oracle(r: &[u8], h: &[u8]) -> usize {
        fn go(r: &[u8], h: &[u8], i: usize, j: usize, memo: &mut Vec<Vec<Option<usize>>>) -> usize {
            if let Some(v) = memo[i][j] {
                return v;
            }
            let v = if i == r.len() {
                h.len() - j
            } else if j == h.len() {
                r.len() - i
            } else {
                let sub = go(r, h, i + 1, j + 1, memo) + usize::from(r[i] != h[j]);
                let del = go(r, h, i + 1, j, memo) + 1;
                let ins = go(r, h, i, j + 1, memo) + 1;
                sub.min(del).min(ins)
            };
            memo[i][j] = Some(v);
            v
        }
        let mut memo = vec![vec![None; h.len() + 1]; r.len() + 1];
        go(r, h, 0, 0, &mut memo)
    }

    #[test]
    fn identical_is_zero() {
        assert_eq!(wer_str("the cat sat", "the cat sat").unwrap(), 0.0);
    }

    #[test]
    fn empty_hypothesis_is_all_deletions() {
        assert_eq!(wer_str("a b c", "").unwrap(), 1.0);
    }

    #[test]
    fn substitution_plus_insertion() {
        assert_eq!(oracle(b"abc", b"axcd"), 2);
        assert_eq!(wer_str("a b c", "a x c d").unwrap(), 2.0 / 3.0);
    }

    #[test]
    fn empty_reference_is_error() {
        assert!(wer_str("  ", "a").is_err());
    }

    #[test]
    fn no_normalization() {
        assert_eq!(wer_str("Hello world", "hello world.").unwrap(), 1.0);
    }

    proptest! {
        #[test]
        fn matches_recursive_oracle(
            r in prop::collection::vec(0u8..5, 1..=12),
            h in prop::collection::vec(0u8..5, 0..=12),
        ) {
            prop_assert_eq!(edit_distance(&r, &h), oracle(&r, &h));
        }

        #[test]
        fn invariant_under_relabeling(
            r in prop::collection::vec(0u8..5, 1..=12),
            h in prop::collection::vec(0u8..5, 0..=12),
            shift in 1u8..5,
        ) {
            let relabel = |v: &[u8]| v.iter().map(|t| (t + shift) % 5 * 3 + 100).collect::<Vec<_>>();
            prop_assert_eq!(wer(&r, &h).unwrap(), wer(&relabel(&r), &relabel(&h)).unwrap());
        }
    }
}
