//! Per-reason rejection accounting shared by the selection, generation,
//! scoring, and cleaning stages.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Rejection tags used across the pipeline. Stages only ever emit tags
/// relevant to them; the report itself is an open string map so user
/// configuration hooks can add their own.
pub mod reject {
    pub const NOT_LETTER_START: &str = "not-letter-start";
    pub const NO_TERMINAL_PUNCTUATION: &str = "no-terminal-punctuation";
    /// Line contained no sentence terminator at all, so segmentation
    /// produced nothing to filter.
    pub const NO_SENTENCE: &str = "no-sentence";
    pub const PARSE_FAILURE: &str = "parse-failure";
    pub const GENERATION_FAILED: &str = "generation-failed";
    pub const SCORE_MASS_TOO_LOW: &str = "score-mass-too-low";
    pub const SCORING_FAILED: &str = "scoring-failed";
    pub const REF_TOO_SHORT: &str = "ref-too-short";
    pub const REF_TOO_LONG: &str = "ref-too-long";
    pub const RATIO_TOO_SMALL: &str = "ratio-too-small";
    pub const RATIO_TOO_LARGE: &str = "ratio-too-large";
    pub const EDIT_DISTANCE_TOO_SMALL: &str = "edit-distance-too-small";
}

/// Counts accepted items and per-reason rejections for one pipeline stage.
///
/// Invariant: `accepted + counts.values().sum()` equals the number of items
/// the owning stage examined, which [`FilterReport::examined`] reports.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub accepted: u64,
    #[serde(default)]
    pub counts: BTreeMap<String, u64>,
}

impl FilterReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn accept(&mut self) {
        self.accepted += 1;
    }

    pub fn reject(&mut self, reason: &str) {
        *self.counts.entry(reason.to_string()).or_insert(0) += 1;
    }

    pub fn rejected(&self) -> u64 {
        self.counts.values().sum()
    }

    /// Total items examined by the stage that owns this report.
    pub fn examined(&self) -> u64 {
        self.accepted + self.rejected()
    }

    pub fn count(&self, reason: &str) -> u64 {
        self.counts.get(reason).copied().unwrap_or(0)
    }

    /// Merge per-worker counts. Associative and commutative, so the order
    /// workers report in does not matter.
    pub fn merge(&mut self, other: &FilterReport) {
        self.accepted += other.accepted;
        for (reason, n) in &other.counts {
            *self.counts.entry(reason.clone()).or_insert(0) += n;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examined_is_accepted_plus_rejections() {
        let mut r = FilterReport::new();
        r.accept();
        r.accept();
        r.reject(reject::NOT_LETTER_START);
        r.reject(reject::NO_SENTENCE);
        r.reject(reject::NOT_LETTER_START);
        assert_eq!(r.accepted, 2);
        assert_eq!(r.rejected(), 3);
        assert_eq!(r.examined(), 5);
        assert_eq!(r.count(reject::NOT_LETTER_START), 2);
    }

    #[test]
    fn merge_is_commutative() {
        let mut a = FilterReport::new();
        a.accept();
        a.reject("x");
        let mut b = FilterReport::new();
        b.reject("x");
        b.reject("y");

        let mut ab = a.clone();
        ab.merge(&b);
        let mut ba = b.clone();
        ba.merge(&a);
        assert_eq!(ab, ba);
        assert_eq!(ab.examined(), 4);
    }
}
