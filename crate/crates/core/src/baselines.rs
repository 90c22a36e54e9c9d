//! Direct "is this question ambiguous?" prompting, zero-shot or few-shot.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detection::first_token;
use crate::domain::{Label, Question, SearchOutcome, StrategySpec};
use crate::oracle::{Oracle, OracleError};

pub const CLASSIFICATION_INSTRUCTION: &str = "Is the following question ambiguous? Just give answer as 'YES' or 'NO'.";

/// JSON form: `{"instruction": ..., "exemplars": [[question, verdict], ...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationPromptTemplate {
    pub instruction: String,
    pub exemplars: Vec<(String, String)>,
}

impl ClassificationPromptTemplate {
    pub fn zero_shot() -> Self {
        ClassificationPromptTemplate {
            instruction: CLASSIFICATION_INSTRUCTION.to_string(),
            exemplars: Vec::new(),
        }
    }

    /// The six stock exemplars.
    pub fn few_shot() -> Self {
        let exemplars = [
            ("How many dominant racecars did Harvick drive?", "No"),
            ("Where is the Maya Hieroglyphics Conference held?", "Yes"),
            ("What is Brian Deletka's job title?", "Yes"),
            ("What is Jalal Talabani the leader of?", "No"),
            ("Who is Blankenship's White House adviser?", "No"),
            ("Where was the gas giveaway in Hackensack?", "Yes"),
        ]
        .into_iter()
        .map(|(q, v)| (q.to_string(), v.to_string()))
        .collect();
        ClassificationPromptTemplate {
            instruction: CLASSIFICATION_INSTRUCTION.to_string(),
            exemplars,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Template for a baseline strategy, reading the exemplar file if one
    /// is named.
    pub fn for_strategy(spec: &StrategySpec) -> Result<Self, String> {
        match spec {
            StrategySpec::ZeroShot => Ok(Self::zero_shot()),
            StrategySpec::FewShot { exemplars: None } => Ok(Self::few_shot()),
            StrategySpec::FewShot { exemplars: Some(p) } => Self::from_json_file(p),
            other => Err(format!("{other} is not a baseline strategy")),
        }
    }
}

pub fn render_classification_prompt(tmpl: &ClassificationPromptTemplate, q: &Question) -> String {
    let mut out = String::new();
    for (text, verdict) in &tmpl.exemplars {
        out.push_str(&format!(
            "{}\nQuestion: {text}\nAnswer: {verdict}\n\n",
            tmpl.instruction
        ));
    }
    out.push_str(&format!("{}\nQuestion: {}\nAnswer:", tmpl.instruction, q.text));
    out
}

/// Maps a classification response to a label; `None` if it is neither a
/// yes nor a no.
pub fn parse_classification(raw: &str) -> Option<Label> {
    match first_token(raw).as_str() {
        "yes" => Some(Label::Ambiguous),
        "no" => Some(Label::Unambiguous),
        _ => None,
    }
}

/// One oracle call; no equivalence probes, so no witness and no trace.
pub fn classify_direct(
    oracle: &dyn Oracle,
    tmpl: &ClassificationPromptTemplate,
    q: &Question,
    strategy: &StrategySpec,
    unparseable_label: Label,
) -> Result<SearchOutcome, OracleError> {
    let raw = oracle.complete(&render_classification_prompt(tmpl, q))?;
    let parsed = parse_classification(&raw);
    Ok(SearchOutcome {
        question_id: q.id.clone(),
        predicted: parsed.unwrap_or(unparseable_label),
        witness: None,
        comparisons: 0,
        strategy: strategy.clone(),
        trace: Vec::new(),
        raw_response: Some(raw),
        unparseable: parsed.is_none(),
    })
}
