//! Evaluate similarity metrics against human ratings: correlation
//! statistics with standard errors over repeated runs, plus a
//! sentence-BLEU baseline.

pub mod bleu;
pub mod correlation;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bleu::{sentence_bleu, BleuConfig, BleuError, BleuTokenizer, Smoothing};
pub use correlation::{kendall_tau_b, pearson_r, spearman_rho, CorrelationError};

use crate::store::DatasetRecord;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dataset has too few rows: need at least 2, got {0}")]
    TooFewRows(usize),
    #[error("paired sequences must have equal length, got {human} and {metric}")]
    LengthMismatch { human: usize, metric: usize },
    #[error("non-finite score at row {0}")]
    NonFinite(usize),
    #[error("runs disagree on {what}: {found} vs {expected}")]
    MismatchedRuns {
        what: &'static str,
        expected: String,
        found: String,
    },
    #[error("record {index} is missing metadata key {key:?}")]
    MissingMetric { index: usize, key: String },
    #[error("record {index}: {key:?} is not a number: {value:?}")]
    BadMetricValue {
        index: usize,
        key: String,
        value: String,
    },
    #[error(transparent)]
    Bleu(#[from] BleuError),
}

/// Human ratings paired with one metric's scores for one language.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedScores {
    human: Vec<f64>,
    metric: Vec<f64>,
    language: String,
}

impl PairedScores {
    pub fn new(human: Vec<f64>, metric: Vec<f64>, language: &str) -> Result<Self, EvalError> {
        if human.len() != metric.len() {
            return Err(EvalError::LengthMismatch {
                human: human.len(),
                metric: metric.len(),
            });
        }
        if human.len() < 2 {
            return Err(EvalError::TooFewRows(human.len()));
        }
        for (i, v) in human.iter().chain(metric.iter()).enumerate() {
            if !v.is_finite() {
                return Err(EvalError::NonFinite(i % human.len()));
            }
        }
        Ok(Self {
            human,
            metric,
            language: language.to_string(),
        })
    }

    pub fn human(&self) -> &[f64] {
        &self.human
    }

    pub fn metric(&self) -> &[f64] {
        &self.metric
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn len(&self) -> usize {
        self.human.len()
    }

    pub fn is_empty(&self) -> bool {
        self.human.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Statistic {
    Pearson,
    Spearman,
    Kendall,
}

impl Statistic {
    pub const ALL: [Statistic; 3] = [Statistic::Pearson, Statistic::Spearman, Statistic::Kendall];

    pub fn name(self) -> &'static str {
        match self {
            Statistic::Pearson => "pearson",
            Statistic::Spearman => "spearman",
            Statistic::Kendall => "kendall",
        }
    }

    pub fn compute(self, scores: &PairedScores) -> Result<f64, CorrelationError> {
        match self {
            Statistic::Pearson => pearson_r(scores.human(), scores.metric()),
            Statistic::Spearman => spearman_rho(scores.human(), scores.metric()),
            Statistic::Kendall => kendall_tau_b(scores.human(), scores.metric()),
        }
    }
}

/// Mean and standard error of one statistic over repeated runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub statistic: Statistic,
    pub mean: f64,
    pub std_error: f64,
    pub run_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Per-statistic results for one group of runs; statistics that were
/// undefined in any run are reported in `diagnostics` instead of `summaries`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalGroup {
    pub summaries: Vec<RunSummary>,
    pub diagnostics: Vec<String>,
}

fn mean_and_std_error(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, var.sqrt() / k.sqrt())
}

/// Compute each requested statistic per run and aggregate: mean over runs
/// and standard error = sample standard deviation / sqrt(run count). A
/// single run reports a standard error of 0 with a note.
pub fn evaluate_runs(
    runs: &[PairedScores],
    statistics: &[Statistic],
) -> Result<EvalGroup, EvalError> {
    let first = runs.first().ok_or(EvalError::TooFewRows(0))?;
    for run in runs {
        if run.language() != first.language() {
            return Err(EvalError::MismatchedRuns {
                what: "language",
                expected: first.language().to_string(),
                found: run.language().to_string(),
            });
        }
        if run.len() != first.len() {
            return Err(EvalError::MismatchedRuns {
                what: "row count",
                expected: first.len().to_string(),
                found: run.len().to_string(),
            });
        }
    }

    let mut group = EvalGroup::default();
    for &statistic in statistics {
        let mut values = Vec::with_capacity(runs.len());
        let mut undefined = None;
        for (run_index, run) in runs.iter().enumerate() {
            match statistic.compute(run) {
                Ok(v) => values.push(v),
                Err(e) => {
                    undefined = Some(format!(
                        "{}: undefined in run {}: {e}",
                        statistic.name(),
                        run_index + 1
                    ));
                    break;
                }
            }
        }
        if let Some(diagnostic) = undefined {
            group.diagnostics.push(diagnostic);
            continue;
        }
        let (mean, std_error) = mean_and_std_error(&values);
        group.summaries.push(RunSummary {
            statistic,
            mean,
            std_error,
            run_count: runs.len(),
            note: (runs.len() == 1).then(|| "single run; standard error is 0".to_string()),
        });
    }
    Ok(group)
}

/// Score every record with sentence BLEU against its human rating, ready
/// for correlation. All records must share the first record's language.
pub fn bleu_baseline_eval(
    records: &[DatasetRecord],
    cfg: &BleuConfig,
) -> Result<PairedScores, EvalError> {
    if records.len() < 2 {
        return Err(EvalError::TooFewRows(records.len()));
    }
    let language = records[0].language.clone();
    let mut human = Vec::with_capacity(records.len());
    let mut metric = Vec::with_capacity(records.len());
    for record in records {
        human.push(record.score);
        metric.push(sentence_bleu(&record.reference, &record.candidate, cfg)?);
    }
    PairedScores::new(human, metric, &language)
}

/// Metadata key carrying a learned metric's output on evaluation datasets.
pub const METRIC_SCORE_KEY: &str = "metric_score";

/// Pull the evaluated metric's scores out of record metadata, pairing them
/// with the human ratings in `score`.
pub fn metric_scores_eval(records: &[DatasetRecord]) -> Result<PairedScores, EvalError> {
    if records.len() < 2 {
        return Err(EvalError::TooFewRows(records.len()));
    }
    let language = records[0].language.clone();
    let mut human = Vec::with_capacity(records.len());
    let mut metric = Vec::with_capacity(records.len());
    for (i, record) in records.iter().enumerate() {
        let raw = record
            .metadata
            .get(METRIC_SCORE_KEY)
            .ok_or_else(|| EvalError::MissingMetric {
                index: i + 1,
                key: METRIC_SCORE_KEY.to_string(),
            })?;
        let value: f64 = raw.parse().map_err(|_| EvalError::BadMetricValue {
            index: i + 1,
            key: METRIC_SCORE_KEY.to_string(),
            value: raw.clone(),
        })?;
        human.push(record.score);
        metric.push(value);
    }
    PairedScores::new(human, metric, &language)
}

/// One line of the evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub dataset: String,
    pub language: String,
    pub metric: String,
    pub statistic: String,
    pub mean: f64,
    pub std_error: f64,
    pub run_count: usize,
}

/// Correlation statistics per dataset, language, and metric, with the tie
/// and variant conventions recorded in the header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub kendall_variant: String,
    pub spearman_ties: String,
    pub rows: Vec<EvalRow>,
    pub diagnostics: Vec<String>,
}

impl Default for EvalReport {
    fn default() -> Self {
        Self {
            kendall_variant: "tau-b".to_string(),
            spearman_ties: "average-ranks".to_string(),
            rows: Vec::new(),
            diagnostics: Vec::new(),
        }
    }
}

impl EvalReport {
    /// Deterministic row order: dataset, language, metric, then the
    /// statistic's declaration order.
    pub fn sort_rows(&mut self) {
        fn stat_rank(name: &str) -> usize {
            Statistic::ALL
                .iter()
                .position(|s| s.name() == name)
                .unwrap_or(Statistic::ALL.len())
        }
        self.rows.sort_by(|a, b| {
            (&a.dataset, &a.language, &a.metric, stat_rank(&a.statistic)).cmp(&(
                &b.dataset,
                &b.language,
                &b.metric,
                stat_rank(&b.statistic),
            ))
        });
    }

    /// Render a fixed-width text table mirroring the JSON report.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "kendall variant: {} | spearman ties: {}\n",
            self.kendall_variant, self.spearman_ties
        ));
        out.push_str(&format!(
            "{:<12} {:<10} {:<10} {:<10} {:>10} {:>10} {:>5}\n",
            "dataset", "language", "metric", "statistic", "mean", "se", "runs"
        ));
        for row in &self.rows {
            out.push_str(&format!(
                "{:<12} {:<10} {:<10} {:<10} {:>10.4} {:>10.4} {:>5}\n",
                row.dataset,
                row.language,
                row.metric,
                row.statistic,
                row.mean,
                row.std_error,
                row.run_count
            ));
        }
        for diagnostic in &self.diagnostics {
            out.push_str(&format!("note: {diagnostic}\n"));
        }
        out
    }
}
