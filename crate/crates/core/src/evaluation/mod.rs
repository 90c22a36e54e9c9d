//! Scoring predictions against gold labels, and the search-cost model.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::detection::EquivalenceMode;
use crate::domain::{Label, StrategySpec};
use crate::search::{Prediction, UnparseablePolicy};

mod efficiency;

pub use efficiency::{efficiency_bounds, efficiency_monte_carlo, ChangeDistribution, EfficiencyEntry, EfficiencyError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvaluationError {
    #[error("question {0:?} has no gold label")]
    MissingGoldLabel(String),
    #[error("prediction for unknown question id {0:?}")]
    UnknownQuestionId(String),
    #[error("more than one prediction for question id {0:?}")]
    DuplicatePrediction(String),
}

/// Binary classification metrics with `Ambiguous` as the positive class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold items that were not scored: aborted searches plus items with no
    /// prediction row at all.
    pub n_failed: usize,
    /// The part of `n_failed` with no prediction row.
    pub n_missing: usize,
    /// Baseline outcomes whose response was neither yes nor no.
    pub n_unparseable: usize,
    pub strategy: Option<StrategySpec>,
    pub equivalence_mode: Option<EquivalenceMode>,
    pub unparseable_policy: Option<UnparseablePolicy>,
    pub warnings: Vec<String>,
}

fn ratio(num: usize, den: usize, name: &str, warnings: &mut Vec<String>) -> f64 {
    if den == 0 {
        warnings.push(format!("{name} has an empty denominator; reported as 0"));
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricsReport {
    /// Metrics from raw confusion counts.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let mut warnings = Vec::new();
        let accuracy = ratio(tp + tn, tp + fp + fn_ + tn, "accuracy", &mut warnings);
        let precision = ratio(tp, tp + fp, "precision", &mut warnings);
        let recall = ratio(tp, tp + fn_, "recall", &mut warnings);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        MetricsReport {
            tp,
            fp,
            fn_,
            tn,
            accuracy,
            precision,
            recall,
            f1,
            n_failed: 0,
            n_missing: 0,
            n_unparseable: 0,
            strategy: None,
            equivalence_mode: None,
            unparseable_policy: None,
            warnings,
        }
    }

    pub fn scored(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        if let Some(s) = &self.strategy {
            out.push_str(&format!("strategy   {s}\n"));
        }
        if let Some(m) = self.equivalence_mode {
            out.push_str(&format!(
                "mode       {}\n",
                serde_json::to_value(m).unwrap().as_str().unwrap()
            ));
        }
        out.push_str(&format!(
            "{:>7} {:>7} {:>7} {:>7}\n{:>7.3} {:>7.3} {:>7.3} {:>7.3}\n",
            "ACC", "PR", "RC", "F1", self.accuracy, self.precision, self.recall, self.f1
        ));
        out.push_str(&format!(
            "tp={} fp={} fn={} tn={} failed={} (missing={}) unparseable={}\n",
            self.tp, self.fp, self.fn_, self.tn, self.n_failed, self.n_missing, self.n_unparseable
        ));
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}

/// Scores predictions against a fully labeled gold dataset. Order of
/// `predictions` does not matter.
pub fn score(predictions: &[Prediction], gold: &Dataset) -> Result<MetricsReport, EvaluationError> {
    let labels: HashMap<&str, Label> = gold
        .items
        .iter()
        .map(|q| {
            q.gold_label
                .map(|l| (q.id.as_str(), l))
                .ok_or_else(|| EvaluationError::MissingGoldLabel(q.id.clone()))
        })
        .collect::<Result<_, _>>()?;

    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    let mut failed = 0;
    let mut unparseable = 0;
    let mut seen = HashSet::new();
    let mut strategies = HashSet::new();
    for p in predictions {
        let id = p.question_id();
        let gold_label = *labels
            .get(id)
            .ok_or_else(|| EvaluationError::UnknownQuestionId(id.to_string()))?;
        if !seen.insert(id) {
            return Err(EvaluationError::DuplicatePrediction(id.to_string()));
        }
        match p {
            Prediction::Failure(f) => {
                failed += 1;
                strategies.insert(strip_seed(f.strategy.clone()));
            }
            Prediction::Outcome(o) => {
                strategies.insert(strip_seed(o.strategy.clone()));
                unparseable += usize::from(o.unparseable);
                match (o.predicted.is_positive(), gold_label.is_positive()) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => tn += 1,
                }
            }
        }
    }
    let missing = labels.len() - seen.len();
    let mut report = MetricsReport::from_counts(tp, fp, fn_, tn);
    report.n_failed = failed + missing;
    report.n_missing = missing;
    report.n_unparseable = unparseable;
    if strategies.len() == 1 {
        report.strategy = strategies.into_iter().next();
    }
    Ok(report)
}

/// Per-question random seeds differ; the report names the strategy family.
fn strip_seed(spec: StrategySpec) -> StrategySpec {
    match spec {
        StrategySpec::Random { samples, .. } => StrategySpec::Random { samples, seed: None },
        other => other,
    }
}
