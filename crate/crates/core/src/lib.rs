//! Build training data for learned machine-translation metrics by distilling
//! sentence-similarity judgments out of a large language model.
//!
//! The pipeline has four data-producing steps plus mixing and evaluation:
//!
//! 1. [`ingest`] selects candidate sentences from a raw text corpus.
//! 2. [`prompt`] renders generation prompts and parses the structured
//!    completions back into altered sentences.
//! 3. [`gateway`] talks to the LLM backend (greedy completions and
//!    next-token probabilities), with a deterministic scripted backend
//!    for testing.
//! 4. [`scoring`] converts next-token probability mass over the discrete
//!    score labels 0..4 into a continuous similarity score.
//! 5. [`cleaning`] drops low-quality pairs with length, ratio, and edit
//!    distance heuristics.
//! 6. [`store`] persists records as newline-delimited JSON and mixes
//!    generated datasets into a baseline with a seeded shuffle.
//! 7. [`eval`] scores metric outputs against human ratings with Pearson,
//!    Spearman, Kendall, and a sentence-BLEU baseline.

pub mod cleaning;
pub mod eval;
pub mod gateway;
pub mod ingest;
pub mod prompt;
pub mod report;
pub mod scoring;
pub mod store;

pub use report::FilterReport;
