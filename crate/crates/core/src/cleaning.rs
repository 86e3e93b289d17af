//! Heuristic filters applied to scored sentence pairs before they become
//! training data: reference length bounds, hypothesis/reference length
//! ratio bounds, and a minimum edit distance.
//!
//! All lengths and distances count Unicode scalar values, not bytes, so the
//! thresholds mean the same thing for Latin and non-Latin scripts.

use serde::{Deserialize, Serialize};

use crate::report::reject;

/// Thresholds for [`apply_cleaning`].
///
/// Boundary semantics: the reference length bounds are inclusive (a
/// 20-scalar reference passes with the default minimum of 20), and the
/// ratio and distance bounds are inclusive as well.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleaningConfig {
    pub min_ref_chars: usize,
    pub max_ref_chars: usize,
    pub min_len_ratio: f64,
    pub max_len_ratio: f64,
    pub min_edit_distance: usize,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        Self {
            min_ref_chars: 20,
            max_ref_chars: 300,
            min_len_ratio: 0.8,
            max_len_ratio: 2.0,
            min_edit_distance: 5,
        }
    }
}

impl CleaningConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.min_ref_chars == 0 || self.min_ref_chars >= self.max_ref_chars {
            return Err(format!(
                "reference length bounds must satisfy 0 < min < max, got {}..{}",
                self.min_ref_chars, self.max_ref_chars
            ));
        }
        if !(self.min_len_ratio > 0.0 && self.min_len_ratio < self.max_len_ratio) {
            return Err(format!(
                "length ratio bounds must satisfy 0 < min < max, got {}..{}",
                self.min_len_ratio, self.max_len_ratio
            ));
        }
        Ok(())
    }
}

/// Levenshtein distance over Unicode scalar values: the minimum number of
/// single-scalar insertions, deletions, and substitutions turning `a`
/// into `b`.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (short, long) = if a.len() <= b.len() { (&a, &b) } else { (&b, &a) };

    if short.is_empty() {
        return long.len();
    }

    // Single-row DP over the shorter string.
    let mut row: Vec<usize> = (0..=short.len()).collect();
    for (j, &cl) in long.iter().enumerate() {
        let mut diag = row[0];
        row[0] = j + 1;
        for (i, &cs) in short.iter().enumerate() {
            let above = row[i + 1];
            row[i + 1] = if cs == cl {
                diag
            } else {
                1 + diag.min(above).min(row[i])
            };
            diag = above;
        }
    }
    row[short.len()]
}

/// Check one scored pair against the cleaning thresholds.
///
/// Checks run in a fixed order — reference length, length ratio, edit
/// distance — and the first failure determines the rejection tag. With a
/// zero-length reference the ratio is never evaluated because the length
/// check fails first.
pub fn apply_cleaning(
    reference: &str,
    hypothesis: &str,
    cfg: &CleaningConfig,
) -> Result<(), &'static str> {
    let ref_len = reference.chars().count();
    let hyp_len = hypothesis.chars().count();

    if ref_len < cfg.min_ref_chars {
        return Err(reject::REF_TOO_SHORT);
    }
    if ref_len > cfg.max_ref_chars {
        return Err(reject::REF_TOO_LONG);
    }

    let ratio = hyp_len as f64 / ref_len as f64;
    if ratio < cfg.min_len_ratio {
        return Err(reject::RATIO_TOO_SMALL);
    }
    if ratio > cfg.max_len_ratio {
        return Err(reject::RATIO_TOO_LARGE);
    }

    if levenshtein(reference, hypothesis) < cfg.min_edit_distance {
        return Err(reject::EDIT_DISTANCE_TOO_SMALL);
    }
    Ok(())
}
