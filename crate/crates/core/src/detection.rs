//! Disambiguation and answer-equivalence testing.
//!
//! A question is pinned to a year by appending `as of <year>?`. Two pinned
//! variants are then compared, either by asking the oracle directly whether
//! their answers agree ([`EquivalenceMode::DirectPrompt`]) or by asking each
//! variant separately and comparing normalized answers
//! ([`EquivalenceMode::AnswerThenCompare`]).

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{DisambiguatedQuestion, EquivalenceVerdict, Question, TimeRange, Verdict, Year};
use crate::oracle::{Oracle, OracleError};

pub const EQUIVALENCE_INSTRUCTION: &str =
    "Is the answer for Q1 and Q2 same? Write only one word between 'Yes' and 'No'.";

#[derive(Debug, Error)]
pub enum DetectionError {
    #[error("cannot compare year {0} with itself")]
    SameYear(Year),
    #[error("cannot compare variants of different questions ({0:?} vs {1:?})")]
    DifferentQuestions(String, String),
    #[error("probe year {year} is not a candidate of range {range}")]
    YearOutOfRange { year: Year, range: TimeRange },
    #[error("failed to read template {path}: {reason}")]
    Template { path: String, reason: String },
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EquivalenceMode {
    /// One oracle call with the rendered equivalence prompt.
    #[default]
    DirectPrompt,
    /// Two oracle calls, one per variant, then a normalized string compare.
    AnswerThenCompare,
}

/// Few-shot template for the equivalence prompt.
///
/// The JSON form is `{"instruction": ..., "exemplars": [[q1, q2, verdict], ...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalencePromptTemplate {
    pub instruction: String,
    pub exemplars: Vec<(String, String, String)>,
}

impl Default for EquivalencePromptTemplate {
    /// The two stock exemplars: one pair whose answers differ, one whose
    /// answers agree.
    fn default() -> Self {
        let ex = |q1: &str, q2: &str, v: &str| (q1.to_string(), q2.to_string(), v.to_string());
        EquivalencePromptTemplate {
            instruction: EQUIVALENCE_INSTRUCTION.to_string(),
            exemplars: vec![
                ex(
                    "who is president of india in present time as of 2000?",
                    "who is president of india in present time as of 2011?",
                    "No",
                ),
                ex(
                    "Who issued ashwamedha coins after performing ashvamedha sacrifice as of 2000?",
                    "Who issued ashwamedha coins after performing ashvamedha sacrifice as of 2001?",
                    "Yes",
                ),
            ],
        }
    }
}

impl EquivalencePromptTemplate {
    pub fn zero_shot() -> Self {
        EquivalencePromptTemplate {
            instruction: EQUIVALENCE_INSTRUCTION.to_string(),
            exemplars: Vec::new(),
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self, DetectionError> {
        let err = |reason: String| DetectionError::Template {
            path: path.display().to_string(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| err(e.to_string()))
    }
}

/// The question text with trailing whitespace and at most one trailing `?`
/// removed. This is the part that precedes `as of <year>?`.
pub fn question_stem(text: &str) -> &str {
    let t = text.trim_end();
    t.strip_suffix('?').unwrap_or(t).trim_end()
}

/// Pins `q` to `year`. A question that already ends in `as of <year>?` is
/// re-pinned rather than given a second suffix.
pub fn disambiguate(q: &Question, year: Year) -> DisambiguatedQuestion {
    let stem = match split_disambiguated(&q.text) {
        Some((stem, _)) => stem.trim_end(),
        None => question_stem(&q.text),
    };
    DisambiguatedQuestion {
        question_id: q.id.clone(),
        year,
        text: format!("{stem} as of {year}?"),
    }
}

/// Splits `"<stem> as of <year>?"` back into its stem and year.
pub fn split_disambiguated(text: &str) -> Option<(&str, Year)> {
    let body = text.trim().strip_suffix('?')?;
    let (stem, year) = body.rsplit_once(" as of ")?;
    let year = year.trim().parse().ok()?;
    Some((stem, year))
}

pub fn render_equivalence_prompt(
    tmpl: &EquivalencePromptTemplate,
    dq1: &DisambiguatedQuestion,
    dqk: &DisambiguatedQuestion,
) -> Result<String, DetectionError> {
    if dq1.year == dqk.year {
        return Err(DetectionError::SameYear(dq1.year));
    }
    if dq1.question_id != dqk.question_id {
        return Err(DetectionError::DifferentQuestions(
            dq1.question_id.clone(),
            dqk.question_id.clone(),
        ));
    }
    let mut out = String::new();
    for (q1, q2, verdict) in &tmpl.exemplars {
        out.push_str(&format!(
            "Q1: {q1}\nQ2: {q2}\n{}\nAnswer: {verdict}\n\n",
            tmpl.instruction
        ));
    }
    out.push_str(&format!(
        "Q1: {}\nQ2: {}\n{}\nAnswer:",
        dq1.text, dqk.text, tmpl.instruction
    ));
    Ok(out)
}

/// First whitespace token of a response, stripped of surrounding punctuation
/// and lowercased.
pub(crate) fn first_token(raw: &str) -> String {
    raw.split_whitespace()
        .next()
        .unwrap_or("")
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase()
}

pub fn parse_equivalence(raw: &str, probe_year: Year) -> EquivalenceVerdict {
    let verdict = match first_token(raw).as_str() {
        "yes" => Verdict::Same,
        "no" => Verdict::Different,
        _ => Verdict::Unparseable,
    };
    EquivalenceVerdict {
        probe_year,
        verdict,
        raw_response: raw.to_string(),
    }
}

/// Normalization for answer strings before comparison: trim, lowercase,
/// collapse internal whitespace, drop terminal punctuation.
pub fn normalize_answer(answer: &str) -> String {
    let collapsed = answer.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    collapsed
        .trim_end_matches(|c: char| c.is_ascii_punctuation())
        .trim_end()
        .to_string()
}

/// Compares the anchor-year variant of `q` with the `probe_year` variant.
pub fn test_equivalence(
    oracle: &dyn Oracle,
    tmpl: &EquivalencePromptTemplate,
    q: &Question,
    range: &TimeRange,
    probe_year: Year,
    mode: EquivalenceMode,
) -> Result<EquivalenceVerdict, DetectionError> {
    if probe_year == range.start_year() {
        return Err(DetectionError::SameYear(probe_year));
    }
    if !range.contains(probe_year) {
        return Err(DetectionError::YearOutOfRange {
            year: probe_year,
            range: *range,
        });
    }
    let dq1 = disambiguate(q, range.start_year());
    let dqk = disambiguate(q, probe_year);
    match mode {
        EquivalenceMode::DirectPrompt => {
            let prompt = render_equivalence_prompt(tmpl, &dq1, &dqk)?;
            let raw = oracle.complete(&prompt)?;
            Ok(parse_equivalence(&raw, probe_year))
        }
        EquivalenceMode::AnswerThenCompare => {
            let a1 = oracle.complete(&dq1.text)?;
            let ak = oracle.complete(&dqk.text)?;
            let verdict = if normalize_answer(&a1) == normalize_answer(&ak) {
                Verdict::Same
            } else {
                Verdict::Different
            };
            Ok(EquivalenceVerdict {
                probe_year,
                verdict,
                raw_response: format!("A1: {a1}\nAk: {ak}"),
            })
        }
    }
}
