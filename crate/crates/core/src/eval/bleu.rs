//! Sentence-level BLEU with clipped n-gram precisions, brevity penalty,
//! and smoothing for zero-match orders.

use std::collections::HashMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Smoothing {
    /// Each zero-match order n gets precision 1 / (2^k * total_n), where k
    /// counts the zero-match orders seen so far.
    Exp,
    /// Zero-match orders get precision floor_value / total_n.
    Floor,
    /// No smoothing: any zero-match order makes the score 0.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BleuTokenizer {
    /// Split on Unicode whitespace only.
    Whitespace,
    /// Pad every Unicode punctuation scalar (category P) with spaces, then
    /// split on whitespace, so "world." becomes ["world", "."].
    Intl,
}

/// Configuration for [`sentence_bleu`]. Scores are on a fixed 0-100 scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BleuConfig {
    pub max_ngram_order: usize,
    pub smoothing: Smoothing,
    pub floor_value: f64,
    pub tokenizer: BleuTokenizer,
}

impl Default for BleuConfig {
    fn default() -> Self {
        Self {
            max_ngram_order: 4,
            smoothing: Smoothing::Exp,
            floor_value: 0.1,
            tokenizer: BleuTokenizer::Intl,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BleuError {
    #[error("reference must contain at least one token")]
    EmptyReference,
    #[error("max_ngram_order must be at least 1")]
    ZeroOrder,
}

static PUNCT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\p{P}").unwrap());

pub fn tokenize(text: &str, tokenizer: BleuTokenizer) -> Vec<String> {
    let padded;
    let text = match tokenizer {
        BleuTokenizer::Whitespace => text,
        BleuTokenizer::Intl => {
            padded = PUNCT.replace_all(text, " $0 ");
            padded.as_ref()
        }
    };
    text.split_whitespace().map(str::to_owned).collect()
}

fn ngram_counts(tokens: &[String], order: usize) -> HashMap<&[String], u32> {
    let mut counts: HashMap<&[String], u32> = HashMap::new();
    if tokens.len() >= order {
        for gram in tokens.windows(order) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence BLEU on a 0-100 scale: the geometric mean of clipped n-gram
/// precisions over orders 1..=max_ngram_order, times the brevity penalty
/// exp(min(0, 1 - ref_len/hyp_len)).
///
/// Orders longer than the hypothesis contribute nothing (the geometric
/// mean runs over the orders the hypothesis can realize), so identical
/// reference and hypothesis score exactly 100 regardless of length. An
/// empty hypothesis scores 0.
pub fn sentence_bleu(reference: &str, hypothesis: &str, cfg: &BleuConfig) -> Result<f64, BleuError> {
    if cfg.max_ngram_order == 0 {
        return Err(BleuError::ZeroOrder);
    }
    let ref_tokens = tokenize(reference, cfg.tokenizer);
    if ref_tokens.is_empty() {
        return Err(BleuError::EmptyReference);
    }
    let hyp_tokens = tokenize(hypothesis, cfg.tokenizer);
    if hyp_tokens.is_empty() {
        return Ok(0.0);
    }

    let hyp_len = hyp_tokens.len();
    let ref_len = ref_tokens.len();

    let mut log_sum = 0.0;
    let mut orders_used = 0usize;
    let mut smooth = 1.0;
    for order in 1..=cfg.max_ngram_order {
        if hyp_len < order {
            break;
        }
        let total = (hyp_len - order + 1) as f64;
        let ref_grams = ngram_counts(&ref_tokens, order);
        let hyp_grams = ngram_counts(&hyp_tokens, order);
        let correct: u32 = hyp_grams
            .iter()
            .map(|(gram, &count)| count.min(ref_grams.get(gram).copied().unwrap_or(0)))
            .sum();

        let precision = if correct == 0 {
            match cfg.smoothing {
                Smoothing::Exp => {
                    smooth *= 2.0;
                    1.0 / (smooth * total)
                }
                Smoothing::Floor => cfg.floor_value / total,
                Smoothing::None => return Ok(0.0),
            }
        } else {
            correct as f64 / total
        };
        log_sum += precision.ln();
        orders_used += 1;
    }

    let brevity = if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    Ok(100.0 * brevity * (log_sum / orders_used as f64).exp())
}
