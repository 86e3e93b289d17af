//! Prompt templates for pair generation and scoring, and the parser that
//! extracts the generated sentence from a structured completion.
//!
//! Templates are plain text with `<NAME>` placeholders. Generation
//! templates end at the explanation-section header so the model's
//! continuation starts with its explanation before the output sentence
//! (section "C) Sample Output"); scoring templates end with a trailing
//! `Rating: ` so the score label is the natural next token.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemplateKind {
    MeaningPreserving,
    MeaningChanging,
    Scoring,
}

impl TemplateKind {
    pub fn is_generation(self) -> bool {
        !matches!(self, TemplateKind::Scoring)
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "meaning-preserving" => Some(Self::MeaningPreserving),
            "meaning-changing" => Some(Self::MeaningChanging),
            "scoring" => Some(Self::Scoring),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExplanationStyle {
    FiveDifferences,
    ThreeIdeas,
    None,
}

impl ExplanationStyle {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "five-differences" => Some(Self::FiveDifferences),
            "three-ideas" => Some(Self::ThreeIdeas),
            "none" => Some(Self::None),
            _ => None,
        }
    }

    /// Header line that opens the explanation section for this style, if
    /// the style has one.
    pub fn section_header(self) -> Option<&'static str> {
        match self {
            ExplanationStyle::FiveDifferences => {
                Some("B) Five Differences Between the Sample Input Sentence and the Output Sentence")
            }
            ExplanationStyle::ThreeIdeas => {
                Some("B) Three Ideas Used to Change the Sample Input Sentence into the Output Sentence")
            }
            ExplanationStyle::None => None,
        }
    }
}

/// Header that opens the output section of a structured completion.
pub const OUTPUT_HEADER: &str = "C) Sample Output";
/// Prefix of the trailing section discarded by the parser.
const TRAILING_SECTION_PREFIX: &str = "D)";
/// Required tail of every scoring template body (a trailing space after
/// the colon is allowed and is what the shipped template uses).
const SCORING_TAIL: &str = "Rating:";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PromptError {
    #[error("unknown placeholder <{0}> in template body")]
    UnknownPlaceholder(String),
    #[error("no value supplied for placeholder <{0}>")]
    MissingValue(String),
    #[error("placeholder value for <{0}> must be non-empty")]
    EmptyValue(String),
    #[error("template {template_id:?}: {message}")]
    InvalidTemplate { template_id: String, message: String },
    #[error("template is a {actual:?} template, expected {expected}")]
    WrongKind {
        expected: &'static str,
        actual: TemplateKind,
    },
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
}

static PLACEHOLDER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"<([A-Z][A-Z0-9_]*)>").unwrap());

fn placeholders_in(body: &str) -> BTreeSet<String> {
    PLACEHOLDER
        .captures_iter(body)
        .map(|c| c[1].to_string())
        .collect()
}

/// A validated prompt template. The placeholder set is derived from the
/// body, so the two can never disagree.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    template_id: String,
    kind: TemplateKind,
    explanation_style: ExplanationStyle,
    body: String,
    placeholders: BTreeSet<String>,
}

impl PromptTemplate {
    pub fn new(
        template_id: &str,
        kind: TemplateKind,
        explanation_style: ExplanationStyle,
        body: &str,
    ) -> Result<Self, PromptError> {
        let placeholders = placeholders_in(body);
        let invalid = |message: String| PromptError::InvalidTemplate {
            template_id: template_id.to_string(),
            message,
        };
        match kind {
            TemplateKind::Scoring => {
                let expected: BTreeSet<String> =
                    ["SENTENCE_1", "SENTENCE_2"].iter().map(|s| s.to_string()).collect();
                if placeholders != expected {
                    return Err(invalid(format!(
                        "scoring templates must use exactly <SENTENCE_1> and <SENTENCE_2>, found {placeholders:?}"
                    )));
                }
                if !body.trim_end_matches(' ').ends_with(SCORING_TAIL) {
                    return Err(invalid(format!(
                        "scoring templates must end with {SCORING_TAIL:?} so the score label is the natural continuation"
                    )));
                }
            }
            TemplateKind::MeaningPreserving | TemplateKind::MeaningChanging => {
                for required in ["SENTENCE", "LANGUAGE"] {
                    if !placeholders.contains(required) {
                        return Err(invalid(format!(
                            "generation templates must use <{required}>"
                        )));
                    }
                }
                if let Some(header) = explanation_style.section_header() {
                    if !body.trim_end().ends_with(header) {
                        return Err(invalid(format!(
                            "template must end at the explanation header {header:?}"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            template_id: template_id.to_string(),
            kind,
            explanation_style,
            body: body.to_string(),
            placeholders,
        })
    }

    pub fn template_id(&self) -> &str {
        &self.template_id
    }

    pub fn kind(&self) -> TemplateKind {
        self.kind
    }

    pub fn explanation_style(&self) -> ExplanationStyle {
        self.explanation_style
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn placeholders(&self) -> &BTreeSet<String> {
        &self.placeholders
    }

    /// Substitute placeholder values. Each `<NAME>` occurrence in the body
    /// is replaced left to right; substituted values are never re-scanned,
    /// so values containing placeholder syntax pass through literally.
    pub fn render(&self, values: &[(&str, &str)]) -> Result<String, PromptError> {
        for name in &self.placeholders {
            if !values.iter().any(|(n, _)| n == name) {
                return Err(PromptError::MissingValue(name.clone()));
            }
        }
        let mut out = String::with_capacity(self.body.len());
        let mut cursor = 0;
        for m in PLACEHOLDER.captures_iter(&self.body) {
            let whole = m.get(0).unwrap();
            let name = &m[1];
            let Some((_, value)) = values.iter().find(|(n, _)| *n == name) else {
                return Err(PromptError::UnknownPlaceholder(name.to_string()));
            };
            out.push_str(&self.body[cursor..whole.start()]);
            out.push_str(value);
            cursor = whole.end();
        }
        out.push_str(&self.body[cursor..]);
        Ok(out)
    }
}

/// Render a generation prompt for one corpus sentence and its language.
pub fn render_generation_prompt(
    template: &PromptTemplate,
    sentence: &str,
    language: &str,
) -> Result<String, PromptError> {
    if !template.kind.is_generation() {
        return Err(PromptError::WrongKind {
            expected: "a generation kind",
            actual: template.kind,
        });
    }
    if sentence.is_empty() {
        return Err(PromptError::EmptyValue("SENTENCE".into()));
    }
    if language.is_empty() {
        return Err(PromptError::EmptyValue("LANGUAGE".into()));
    }
    template.render(&[("SENTENCE", sentence), ("LANGUAGE", language)])
}

/// Render a scoring prompt for a (reference, hypothesis) pair. Scoring the
/// identity pair is allowed.
pub fn render_scoring_prompt(
    template: &PromptTemplate,
    reference: &str,
    hypothesis: &str,
) -> Result<String, PromptError> {
    if template.kind != TemplateKind::Scoring {
        return Err(PromptError::WrongKind {
            expected: "scoring",
            actual: template.kind,
        });
    }
    template.render(&[("SENTENCE_1", reference), ("SENTENCE_2", hypothesis)])
}

/// A structured completion split into its explanation and output sentence.
/// `parse_ok == false` marks completions the parser could not use; callers
/// count those as parse failures rather than erroring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedGeneration {
    pub explanation: String,
    pub generated_sentence: String,
    pub raw_completion: String,
    pub parse_ok: bool,
}

impl ParsedGeneration {
    fn failure(raw: &str) -> Self {
        Self {
            explanation: String::new(),
            generated_sentence: String::new(),
            raw_completion: raw.to_string(),
            parse_ok: false,
        }
    }
}

/// Split a greedy completion into explanation and generated sentence.
///
/// For styles with an explanation section, everything before the
/// `C) Sample Output` header is the explanation and the first non-empty
/// line after it is the sentence; a trailing `D)` section and anything
/// after it are discarded. With [`ExplanationStyle::None`] the first
/// non-empty line of the whole completion is the sentence. Header matching
/// is exact up to surrounding whitespace.
pub fn parse_generation_output(raw: &str, style: ExplanationStyle) -> ParsedGeneration {
    let take_first_line = |lines: &mut dyn Iterator<Item = &str>| -> Option<String> {
        for line in lines {
            let line = line.trim();
            if line.starts_with(TRAILING_SECTION_PREFIX) {
                return None;
            }
            if !line.is_empty() {
                return Some(line.to_string());
            }
        }
        None
    };

    if style == ExplanationStyle::None {
        return match take_first_line(&mut raw.lines()) {
            Some(sentence) => ParsedGeneration {
                explanation: String::new(),
                generated_sentence: sentence,
                raw_completion: raw.to_string(),
                parse_ok: true,
            },
            None => ParsedGeneration::failure(raw),
        };
    }

    let mut lines = raw.lines();
    let mut explanation_lines = Vec::new();
    let mut found_header = false;
    for line in lines.by_ref() {
        if line.trim() == OUTPUT_HEADER {
            found_header = true;
            break;
        }
        explanation_lines.push(line);
    }
    if !found_header {
        return ParsedGeneration::failure(raw);
    }
    match take_first_line(&mut lines) {
        Some(sentence) => ParsedGeneration {
            explanation: explanation_lines.join("\n").trim().to_string(),
            generated_sentence: sentence,
            raw_completion: raw.to_string(),
            parse_ok: true,
        },
        None => ParsedGeneration::failure(raw),
    }
}

/// One few-shot example for the scoring prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub reference: String,
    pub hypothesis: String,
    pub rating: u8,
}

impl FewShotExample {
    fn render(&self) -> String {
        format!(
            "Reference: {}\nHypothesis: {}\nRating: {}",
            self.reference, self.hypothesis, self.rating
        )
    }
}

/// A template file as read from disk, before few-shot resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateFile {
    pub template_id: String,
    pub kind: TemplateKind,
    pub explanation_style: ExplanationStyle,
    pub body: String,
}

const EXAMPLES_PLACEHOLDER: &str = "<ADDITIONAL_EXAMPLES>";

impl TemplateFile {
    /// Resolve `<ADDITIONAL_EXAMPLES>` (if present) with the given
    /// few-shot examples and validate the result into a usable template.
    pub fn into_template(self, examples: &[FewShotExample]) -> Result<PromptTemplate, PromptError> {
        let rendered: Vec<String> = examples.iter().map(FewShotExample::render).collect();
        let body = if self.body.contains(EXAMPLES_PLACEHOLDER) {
            self.body.replace(EXAMPLES_PLACEHOLDER, &rendered.join("\n\n"))
        } else {
            self.body
        };
        PromptTemplate::new(&self.template_id, self.kind, self.explanation_style, &body)
    }
}

/// Parse the template file format: `key: value` front-matter lines for
/// `template_id`, `kind`, and `explanation_style`, then a `---` separator,
/// then the body verbatim to end of file.
pub fn parse_template_str(content: &str, origin: &Path) -> Result<TemplateFile, PromptError> {
    let file_err = |message: String| PromptError::File {
        path: origin.to_path_buf(),
        message,
    };
    let Some(separator) = content.find("\n---\n") else {
        return Err(file_err("missing `---` separator after front matter".into()));
    };
    let (front, rest) = content.split_at(separator);
    let body = &rest["\n---\n".len()..];

    let mut template_id = None;
    let mut kind = None;
    let mut style = None;
    for line in front.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once(':') else {
            return Err(file_err(format!("front matter line without `:`: {line:?}")));
        };
        let value = value.trim();
        match key.trim() {
            "template_id" => template_id = Some(value.to_string()),
            "kind" => {
                kind = Some(
                    TemplateKind::parse(value)
                        .ok_or_else(|| file_err(format!("unknown kind {value:?}")))?,
                )
            }
            "explanation_style" => {
                style = Some(
                    ExplanationStyle::parse(value)
                        .ok_or_else(|| file_err(format!("unknown explanation_style {value:?}")))?,
                )
            }
            other => return Err(file_err(format!("unknown front matter key {other:?}"))),
        }
    }
    Ok(TemplateFile {
        template_id: template_id.ok_or_else(|| file_err("missing template_id".into()))?,
        kind: kind.ok_or_else(|| file_err("missing kind".into()))?,
        explanation_style: style.ok_or_else(|| file_err("missing explanation_style".into()))?,
        body: body.to_string(),
    })
}

pub fn load_template(path: &Path) -> Result<TemplateFile, PromptError> {
    let content = std::fs::read_to_string(path).map_err(|e| PromptError::File {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_template_str(&content, path)
}

/// Load newline-delimited JSON few-shot examples
/// (`{"reference", "hypothesis", "rating"}` per line).
pub fn load_fewshot_examples(path: &Path) -> Result<Vec<FewShotExample>, PromptError> {
    let content = std::fs::read_to_string(path).map_err(|e| PromptError::File {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    content
        .lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| PromptError::File {
                path: path.to_path_buf(),
                message: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

const DEFAULT_PRESERVE_FIVE: &str =
    include_str!("../../../assets/templates/preserve_five_differences.tmpl");
const DEFAULT_PRESERVE_THREE: &str =
    include_str!("../../../assets/templates/preserve_three_ideas.tmpl");
const DEFAULT_CHANGE_FIVE: &str =
    include_str!("../../../assets/templates/change_five_differences.tmpl");
const DEFAULT_SCORING: &str = include_str!("../../../assets/templates/score_fewshot.tmpl");
const DEFAULT_FEWSHOT: &str = include_str!("../../../assets/fewshot/scoring_examples.jsonl");

/// The shipped generation templates, in the order the pipeline rotates
/// through them: preserving, preserving with three ideas, changing.
pub fn default_generation_templates() -> Vec<TemplateFile> {
    [DEFAULT_PRESERVE_FIVE, DEFAULT_PRESERVE_THREE, DEFAULT_CHANGE_FIVE]
        .iter()
        .map(|content| {
            parse_template_str(content, Path::new("<builtin>")).expect("builtin template parses")
        })
        .collect()
}

pub fn default_scoring_template() -> TemplateFile {
    parse_template_str(DEFAULT_SCORING, Path::new("<builtin>")).expect("builtin template parses")
}

pub fn default_fewshot_examples() -> Vec<FewShotExample> {
    DEFAULT_FEWSHOT
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).expect("builtin few-shot example parses"))
        .collect()
}
