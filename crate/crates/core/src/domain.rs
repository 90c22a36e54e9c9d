//! Value types shared across the pipeline.
//!
//! Everything here is an immutable value: questions, year ranges, strategy
//! descriptors, per-probe verdicts and the outcome of classifying one
//! question. Serialization formats are part of the public contract because
//! outcome files are consumed by `tempamb evaluate` and by resumed runs.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Calendar year. The pipeline works at year granularity only.
pub type Year = i32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DomainError {
    #[error("degenerate time range {start}..={end}: need start_year < end_year")]
    DegenerateRange { start: Year, end: Year },
    #[error("question text is empty")]
    EmptyText,
    #[error("unknown label {0:?} (expected \"ambiguous\" or \"unambiguous\")")]
    UnknownLabel(String),
    #[error("invalid time range {0:?} (expected START:END)")]
    RangeSyntax(String),
    #[error("invalid strategy {input:?}: {reason}")]
    StrategySyntax { input: String, reason: String },
}

/// Gold or predicted label. `Ambiguous` is the positive class everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Ambiguous,
    Unambiguous,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Ambiguous => "ambiguous",
            Label::Unambiguous => "unambiguous",
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Ambiguous
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("ambiguous") {
            Ok(Label::Ambiguous)
        } else if t.eq_ignore_ascii_case("unambiguous") {
            Ok(Label::Unambiguous)
        } else {
            Err(DomainError::UnknownLabel(s.to_string()))
        }
    }
}

/// Corpus a question was drawn from; decides the default time frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Source {
    ArchivalQA,
    SituatedQA,
    AmbigQA,
    #[default]
    Other,
}

impl Source {
    /// Lenient parse: case and punctuation are ignored, anything unrecognised
    /// is `Other`.
    pub fn parse_lenient(s: &str) -> Source {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        match key.as_str() {
            "archivalqa" => Source::ArchivalQA,
            "situatedqa" => Source::SituatedQA,
            "ambigqa" => Source::AmbigQA,
            _ => Source::Other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Source::ArchivalQA => "ArchivalQA",
            Source::SituatedQA => "SituatedQA",
            Source::AmbigQA => "AmbigQA",
            Source::Other => "Other",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
    pub gold_label: Option<Label>,
    pub source: Source,
}

impl Question {
    /// Builds a question, trimming the text. Rejects empty text.
    pub fn new(
        id: impl Into<String>,
        text: &str,
        gold_label: Option<Label>,
        source: Source,
    ) -> Result<Self, DomainError> {
        let text = text.trim();
        if text.is_empty() {
            return Err(DomainError::EmptyText);
        }
        Ok(Question {
            id: id.into(),
            text: text.to_string(),
            gold_label,
            source,
        })
    }
}

/// Inclusive year interval `[start_year, end_year]` with at least two years.
///
/// The first year is the anchor every probe is compared against; the
/// remaining `len() - 1` years are the probe candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TimeRange {
    start_year: Year,
    end_year: Year,
}

impl TimeRange {
    pub fn new(start_year: Year, end_year: Year) -> Result<Self, DomainError> {
        validate_range(TimeRange { start_year, end_year })
    }

    pub fn start_year(&self) -> Year {
        self.start_year
    }

    pub fn end_year(&self) -> Year {
        self.end_year
    }

    pub fn len(&self) -> usize {
        (self.end_year - self.start_year + 1) as usize
    }

    /// Always false for a validated range; present for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of non-anchor years, i.e. the maximum number of comparisons.
    pub fn candidate_count(&self) -> usize {
        self.len() - 1
    }

    pub fn contains(&self, year: Year) -> bool {
        (self.start_year..=self.end_year).contains(&year)
    }

    /// Probe candidates: every year after the anchor.
    pub fn candidates(&self) -> std::ops::RangeInclusive<Year> {
        self.start_year + 1..=self.end_year
    }
}

/// Checks `start_year < end_year`. A single year admits no comparison pair.
pub fn validate_range(range: TimeRange) -> Result<TimeRange, DomainError> {
    if range.start_year < range.end_year {
        Ok(range)
    } else {
        Err(DomainError::DegenerateRange {
            start: range.start_year,
            end: range.end_year,
        })
    }
}

pub const ARCHIVAL_RANGE: (Year, Year) = (1987, 2007);
pub const DEFAULT_RANGE: (Year, Year) = (2000, 2024);

/// Time frame for a question: the override if given, otherwise the
/// corpus default (ArchivalQA covers 1987–2007, everything else 2000–2024).
pub fn resolve_range(source: Source, override_range: Option<TimeRange>) -> Result<TimeRange, DomainError> {
    if let Some(r) = override_range {
        return validate_range(r);
    }
    let (start, end) = match source {
        Source::ArchivalQA => ARCHIVAL_RANGE,
        Source::SituatedQA | Source::AmbigQA | Source::Other => DEFAULT_RANGE,
    };
    TimeRange::new(start, end)
}

impl fmt::Display for TimeRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.start_year, self.end_year)
    }
}

impl FromStr for TimeRange {
    type Err = DomainError;

    /// Accepts `START:END` or `START-END`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DomainError::RangeSyntax(s.to_string());
        let (a, b) = s
            .trim()
            .split_once(':')
            .or_else(|| s.trim().split_once('-'))
            .ok_or_else(bad)?;
        let start = a.trim().parse().map_err(|_| bad())?;
        let end = b.trim().parse().map_err(|_| bad())?;
        TimeRange::new(start, end)
    }
}

#[derive(Serialize, Deserialize)]
struct RawRange {
    start_year: Year,
    end_year: Year,
}

impl Serialize for TimeRange {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        RawRange {
            start_year: self.start_year,
            end_year: self.end_year,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TimeRange {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawRange::deserialize(d)?;
        TimeRange::new(raw.start_year, raw.end_year).map_err(serde::de::Error::custom)
    }
}

/// A question with its temporal context pinned by an `as of <year>?` suffix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DisambiguatedQuestion {
    pub question_id: String,
    pub year: Year,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Same,
    Different,
    Unparseable,
}

/// One answer-equivalence probe: anchor year vs `probe_year`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalenceVerdict {
    pub probe_year: Year,
    pub verdict: Verdict,
    pub raw_response: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DacVariant {
    /// Preorder midpoint traversal that eventually visits every candidate.
    Full,
    /// Keep halving towards the left on every `Same`.
    HalfLtr,
    /// Keep halving towards the right on every `Same`.
    HalfRtl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    Linear,
    SkipList,
    Random,
    DacFull,
    DacHalfLtr,
    DacHalfRtl,
    ZeroShot,
    FewShot,
}

/// Which classifier to run over a question.
///
/// String form (used by the CLI and in outcome files): `linear`, `skip:<s>`,
/// `random:<k>[:seed=<n>]`, `dac`, `dac:half-ltr`, `dac:half-rtl`,
/// `zero-shot`, `few-shot[:file=<path>]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum StrategySpec {
    Linear,
    SkipList { interval: u32 },
    Random { samples: u32, seed: Option<u64> },
    Dac(DacVariant),
    ZeroShot,
    FewShot { exemplars: Option<PathBuf> },
}

impl StrategySpec {
    pub fn kind(&self) -> StrategyKind {
        match self {
            StrategySpec::Linear => StrategyKind::Linear,
            StrategySpec::SkipList { .. } => StrategyKind::SkipList,
            StrategySpec::Random { .. } => StrategyKind::Random,
            StrategySpec::Dac(DacVariant::Full) => StrategyKind::DacFull,
            StrategySpec::Dac(DacVariant::HalfLtr) => StrategyKind::DacHalfLtr,
            StrategySpec::Dac(DacVariant::HalfRtl) => StrategyKind::DacHalfRtl,
            StrategySpec::ZeroShot => StrategyKind::ZeroShot,
            StrategySpec::FewShot { .. } => StrategyKind::FewShot,
        }
    }

    /// True for the year-range search strategies, false for the direct
    /// prompting baselines.
    pub fn is_search(&self) -> bool {
        !matches!(self, StrategySpec::ZeroShot | StrategySpec::FewShot { .. })
    }

    pub fn with_seed(&self, seed: u64) -> StrategySpec {
        match self {
            StrategySpec::Random { samples, .. } => StrategySpec::Random {
                samples: *samples,
                seed: Some(seed),
            },
            other => other.clone(),
        }
    }
}

impl fmt::Display for StrategySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategySpec::Linear => f.write_str("linear"),
            StrategySpec::SkipList { interval } => write!(f, "skip:{interval}"),
            StrategySpec::Random { samples, seed: None } => write!(f, "random:{samples}"),
            StrategySpec::Random {
                samples,
                seed: Some(seed),
            } => write!(f, "random:{samples}:seed={seed}"),
            StrategySpec::Dac(DacVariant::Full) => f.write_str("dac"),
            StrategySpec::Dac(DacVariant::HalfLtr) => f.write_str("dac:half-ltr"),
            StrategySpec::Dac(DacVariant::HalfRtl) => f.write_str("dac:half-rtl"),
            StrategySpec::ZeroShot => f.write_str("zero-shot"),
            StrategySpec::FewShot { exemplars: None } => f.write_str("few-shot"),
            StrategySpec::FewShot { exemplars: Some(path) } => write!(f, "few-shot:file={}", path.display()),
        }
    }
}

impl FromStr for StrategySpec {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason: &str| DomainError::StrategySyntax {
            input: s.to_string(),
            reason: reason.to_string(),
        };
        let s = s.trim();
        let (head, rest) = match s.split_once(':') {
            Some((h, r)) => (h, Some(r)),
            None => (s, None),
        };
        match (head.to_ascii_lowercase().as_str(), rest) {
            ("linear", None) => Ok(StrategySpec::Linear),
            ("skip", Some(n)) => {
                let interval: u32 = n.parse().map_err(|_| err("interval must be a positive integer"))?;
                if interval == 0 {
                    return Err(err("interval must be at least 1"));
                }
                Ok(StrategySpec::SkipList { interval })
            }
            ("random", Some(rest)) => {
                let (k, seed) = match rest.split_once(':') {
                    Some((k, seed)) => {
                        let seed = seed
                            .strip_prefix("seed=")
                            .ok_or_else(|| err("expected seed=<n>"))?
                            .parse::<u64>()
                            .map_err(|_| err("seed must be an unsigned 64-bit integer"))?;
                        (k, Some(seed))
                    }
                    None => (rest, None),
                };
                let samples: u32 = k.parse().map_err(|_| err("sample count must be a positive integer"))?;
                if samples == 0 {
                    return Err(err("sample count must be at least 1"));
                }
                Ok(StrategySpec::Random { samples, seed })
            }
            ("dac", None) => Ok(StrategySpec::Dac(DacVariant::Full)),
            ("dac", Some("full")) => Ok(StrategySpec::Dac(DacVariant::Full)),
            ("dac", Some("half-ltr")) => Ok(StrategySpec::Dac(DacVariant::HalfLtr)),
            ("dac", Some("half-rtl")) => Ok(StrategySpec::Dac(DacVariant::HalfRtl)),
            ("zero-shot", None) => Ok(StrategySpec::ZeroShot),
            ("few-shot", None) => Ok(StrategySpec::FewShot { exemplars: None }),
            ("few-shot", Some(rest)) => {
                let path = rest.strip_prefix("file=").ok_or_else(|| err("expected file=<path>"))?;
                Ok(StrategySpec::FewShot {
                    exemplars: Some(PathBuf::from(path)),
                })
            }
            _ => Err(err("unrecognised strategy")),
        }
    }
}

impl Serialize for StrategySpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StrategySpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Result of classifying one question.
///
/// For search strategies `predicted == Ambiguous` exactly when a witness is
/// present, which in turn happens exactly when the trace holds a `Different`
/// verdict. Baseline (direct prompting) outcomes never carry a witness or a
/// trace; their raw response is kept in `raw_response` instead.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub question_id: String,
    pub predicted: Label,
    pub witness: Option<(Year, Year)>,
    pub comparisons: usize,
    pub strategy: StrategySpec,
    pub trace: Vec<EquivalenceVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_response: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub unparseable: bool,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("outcome for {question_id}: {reason}")]
pub struct InvariantViolation {
    pub question_id: String,
    pub reason: String,
}

impl SearchOutcome {
    /// Checks the structural invariants of an outcome against the range it
    /// was searched over.
    pub fn check_invariants(&self, range: &TimeRange) -> Result<(), InvariantViolation> {
        let fail = |reason: String| {
            Err(InvariantViolation {
                question_id: self.question_id.clone(),
                reason,
            })
        };
        if self.comparisons != self.trace.len() {
            return fail(format!(
                "comparisons {} != trace length {}",
                self.comparisons,
                self.trace.len()
            ));
        }
        if !self.strategy.is_search() {
            if self.witness.is_some() || !self.trace.is_empty() {
                return fail("baseline outcome carries a witness or trace".into());
            }
            return Ok(());
        }
        let any_different = self.trace.iter().any(|v| v.verdict == Verdict::Different);
        let ambiguous = self.predicted == Label::Ambiguous;
        if ambiguous != self.witness.is_some() || ambiguous != any_different {
            return fail(format!(
                "predicted {} / witness {:?} / trace has Different = {any_different}",
                self.predicted, self.witness
            ));
        }
        for v in &self.trace {
            if !range.contains(v.probe_year) || v.probe_year == range.start_year() {
                return fail(format!("probe year {} outside candidates of {range}", v.probe_year));
            }
        }
        if let Some((anchor, year)) = self.witness {
            if anchor != range.start_year() {
                return fail(format!("witness anchor {anchor} is not the range start"));
            }
            let backed = self
                .trace
                .iter()
                .any(|v| v.probe_year == year && v.verdict == Verdict::Different);
            if !backed {
                return fail(format!("witness year {year} has no Different verdict in trace"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_range_cases() {
        let r = TimeRange::new(2000, 2024).unwrap();
        assert_eq!(r.len(), 25);
        assert_eq!(TimeRange::new(1987, 2007).unwrap().len(), 21);
        assert_eq!(
            TimeRange::new(2020, 2020),
            Err(DomainError::DegenerateRange { start: 2020, end: 2020 })
        );
        assert!(TimeRange::new(2024, 2000).is_err());
    }

    #[test]
    fn resolve_range_per_source() {
        assert_eq!(
            resolve_range(Source::ArchivalQA, None).unwrap(),
            TimeRange::new(1987, 2007).unwrap()
        );
        assert_eq!(
            resolve_range(Source::SituatedQA, None).unwrap(),
            TimeRange::new(2000, 2024).unwrap()
        );
        assert_eq!(
            resolve_range(Source::AmbigQA, None).unwrap(),
            TimeRange::new(2000, 2024).unwrap()
        );
        assert_eq!(
            resolve_range(Source::Other, None).unwrap(),
            TimeRange::new(2000, 2024).unwrap()
        );
        let o = TimeRange::new(1990, 1999).unwrap();
        assert_eq!(resolve_range(Source::ArchivalQA, Some(o)).unwrap(), o);
    }

    #[test]
    fn label_parse_is_case_insensitive() {
        assert_eq!("AMBIGUOUS".parse::<Label>().unwrap(), Label::Ambiguous);
        assert_eq!(" Unambiguous ".parse::<Label>().unwrap(), Label::Unambiguous);
        assert!("maybe".parse::<Label>().is_err());
        assert_eq!(serde_json::to_string(&Label::Ambiguous).unwrap(), "\"ambiguous\"");
    }

    #[test]
    fn strategy_strings_round_trip() {
        for s in [
            "linear",
            "skip:2",
            "skip:10",
            "random:5",
            "random:5:seed=42",
            "dac",
            "dac:half-ltr",
            "dac:half-rtl",
            "zero-shot",
            "few-shot",
            "few-shot:file=ex.json",
        ] {
            let spec: StrategySpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert_eq!(
            "dac:full".parse::<StrategySpec>().unwrap(),
            StrategySpec::Dac(DacVariant::Full)
        );
        assert!("skip:0".parse::<StrategySpec>().is_err());
        assert!("random:0".parse::<StrategySpec>().is_err());
        assert!("random:5:42".parse::<StrategySpec>().is_err());
        assert!("bogus".parse::<StrategySpec>().is_err());
    }

    #[test]
    fn range_parse() {
        assert_eq!(
            "2000:2024".parse::<TimeRange>().unwrap(),
            TimeRange::new(2000, 2024).unwrap()
        );
        assert_eq!(
            "1987-2007".parse::<TimeRange>().unwrap(),
            TimeRange::new(1987, 2007).unwrap()
        );
        assert!("2000".parse::<TimeRange>().is_err());
        assert!(serde_json::from_str::<TimeRange>(r#"{"start_year":5,"end_year":5}"#).is_err());
    }

    #[test]
    fn question_rejects_blank_text() {
        assert_eq!(
            Question::new("q", "   ", None, Source::Other),
            Err(DomainError::EmptyText)
        );
        assert_eq!(Question::new("q", "  hi? ", None, Source::Other).unwrap().text, "hi?");
    }

    #[test]
    fn outcome_serializes_with_contract_keys() {
        let o = SearchOutcome {
            question_id: "q1".into(),
            predicted: Label::Ambiguous,
            witness: Some((2000, 2022)),
            comparisons: 1,
            strategy: StrategySpec::Linear,
            trace: vec![EquivalenceVerdict {
                probe_year: 2022,
                verdict: Verdict::Different,
                raw_response: "No".into(),
            }],
            raw_response: None,
            unparseable: false,
        };
        let v: serde_json::Value = serde_json::to_value(&o).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            [
                "comparisons",
                "predicted",
                "question_id",
                "strategy",
                "trace",
                "witness"
            ]
        );
        assert_eq!(v["witness"], serde_json::json!([2000, 2022]));
        assert_eq!(v["strategy"], "linear");
        let back: SearchOutcome = serde_json::from_value(v).unwrap();
        assert_eq!(back, o);
        assert!(o.check_invariants(&TimeRange::new(2000, 2024).unwrap()).is_ok());
    }

    #[test]
    fn invariant_check_catches_unbacked_witness() {
        let o = SearchOutcome {
            question_id: "q1".into(),
            predicted: Label::Ambiguous,
            witness: Some((2000, 2022)),
            comparisons: 0,
            strategy: StrategySpec::Linear,
            trace: vec![],
            raw_response: None,
            unparseable: false,
        };
        assert!(o.check_invariants(&TimeRange::new(2000, 2024).unwrap()).is_err());
    }
}
