use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Oracle, OracleError};
use crate::detection::{question_stem, split_disambiguated};
use crate::domain::{Question, TimeRange, Year};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SyntheticError {
    #[error("no timeline for question {0:?}")]
    UnknownQuestion(String),
    #[error("year {year} precedes the first change point ({first}) of {id:?}")]
    YearBeforeFirstChangePoint { id: String, year: Year, first: Year },
    #[error("timeline for {id:?} is invalid: {reason}")]
    InvalidTimeline { id: String, reason: String },
    #[error("prompt not understood by the synthetic oracle: {0:?}")]
    UnrecognizedPrompt(String),
    #[error("failed to read world file: {0}")]
    Io(String),
}

/// Ground-truth answers as step functions of the year.
///
/// JSON form: `{"<question id>": [[from_year, "answer"], ...], ...}` with
/// strictly increasing years.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SyntheticWorld {
    pub timelines: BTreeMap<String, Vec<(Year, String)>>,
}

impl SyntheticWorld {
    pub fn new(timelines: BTreeMap<String, Vec<(Year, String)>>) -> Result<Self, SyntheticError> {
        let world = SyntheticWorld { timelines };
        world.validate()?;
        Ok(world)
    }

    pub fn from_json_file(path: &Path) -> Result<Self, SyntheticError> {
        let text = std::fs::read_to_string(path).map_err(|e| SyntheticError::Io(format!("{}: {e}", path.display())))?;
        let world: SyntheticWorld =
            serde_json::from_str(&text).map_err(|e| SyntheticError::Io(format!("{}: {e}", path.display())))?;
        world.validate()?;
        Ok(world)
    }

    pub fn insert(&mut self, id: impl Into<String>, timeline: Vec<(Year, String)>) -> Result<(), SyntheticError> {
        let id = id.into();
        check_timeline(&id, &timeline)?;
        self.timelines.insert(id, timeline);
        Ok(())
    }

    fn validate(&self) -> Result<(), SyntheticError> {
        for (id, tl) in &self.timelines {
            check_timeline(id, tl)?;
        }
        Ok(())
    }

    /// Checks that the timeline of `id` is defined from `range.start_year()`.
    pub fn covers(&self, id: &str, range: &TimeRange) -> Result<(), SyntheticError> {
        synthetic_answer(self, id, range.start_year()).map(|_| ())
    }

    /// Ground truth: does any candidate year answer differently from the
    /// anchor year?
    pub fn is_ambiguous_over(&self, id: &str, range: &TimeRange) -> Result<bool, SyntheticError> {
        let anchor = synthetic_answer(self, id, range.start_year())?;
        for y in range.candidates() {
            if synthetic_answer(self, id, y)? != anchor {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

fn check_timeline(id: &str, tl: &[(Year, String)]) -> Result<(), SyntheticError> {
    if tl.is_empty() {
        return Err(SyntheticError::InvalidTimeline {
            id: id.to_string(),
            reason: "no change points".into(),
        });
    }
    if tl.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(SyntheticError::InvalidTimeline {
            id: id.to_string(),
            reason: "change point years must be strictly increasing".into(),
        });
    }
    Ok(())
}

/// Answer of the latest change point at or before `year`.
pub fn synthetic_answer<'w>(
    world: &'w SyntheticWorld,
    question_id: &str,
    year: Year,
) -> Result<&'w str, SyntheticError> {
    let tl = world
        .timelines
        .get(question_id)
        .ok_or_else(|| SyntheticError::UnknownQuestion(question_id.to_string()))?;
    let idx = tl.partition_point(|(from, _)| *from <= year);
    if idx == 0 {
        return Err(SyntheticError::YearBeforeFirstChangePoint {
            id: question_id.to_string(),
            year,
            first: tl[0].0,
        });
    }
    Ok(&tl[idx - 1].1)
}

/// Oracle backed by a [`SyntheticWorld`].
///
/// It understands three prompt shapes by looking at their final block:
/// - equivalence prompts (last `Q1:`/`Q2:` pair): answers `Yes` if both
///   years resolve to the same answer, else `No`;
/// - a bare disambiguated question `... as of <year>?`: the answer itself;
/// - classification prompts (last `Question:` line): `YES` if the timeline
///   has more than one distinct answer, else `NO`.
#[derive(Debug, Clone)]
pub struct SyntheticOracle {
    world: SyntheticWorld,
    stems: HashMap<String, String>,
}

impl SyntheticOracle {
    /// `questions` maps prompt text back to ids; world keys are also
    /// accepted as question texts.
    pub fn new(world: SyntheticWorld, questions: &[Question]) -> Self {
        let mut stems = HashMap::new();
        for q in questions {
            if world.timelines.contains_key(&q.id) {
                stems.insert(question_stem(&q.text).to_string(), q.id.clone());
            }
        }
        for id in world.timelines.keys() {
            stems.entry(question_stem(id).to_string()).or_insert_with(|| id.clone());
        }
        SyntheticOracle { world, stems }
    }

    pub fn world(&self) -> &SyntheticWorld {
        &self.world
    }

    fn id_for_stem(&self, stem: &str) -> Result<&str, SyntheticError> {
        self.stems
            .get(stem)
            .map(String::as_str)
            .ok_or_else(|| SyntheticError::UnknownQuestion(stem.to_string()))
    }

    fn answer(&self, disambiguated: &str) -> Result<(String, &str), SyntheticError> {
        let (stem, year) = split_disambiguated(disambiguated)
            .ok_or_else(|| SyntheticError::UnrecognizedPrompt(disambiguated.to_string()))?;
        let id = self.id_for_stem(stem)?;
        Ok((id.to_string(), synthetic_answer(&self.world, id, year)?))
    }

    fn respond(&self, prompt: &str) -> Result<String, SyntheticError> {
        let lines: Vec<&str> = prompt.lines().collect();
        if let Some(i) = lines.iter().rposition(|l| l.starts_with("Q2: ")) {
            let q1 = i
                .checked_sub(1)
                .and_then(|j| lines[j].strip_prefix("Q1: "))
                .ok_or_else(|| SyntheticError::UnrecognizedPrompt(prompt.to_string()))?;
            let q2 = &lines[i]["Q2: ".len()..];
            let (id1, a1) = self.answer(q1)?;
            let (id2, a2) = self.answer(q2)?;
            if id1 != id2 {
                return Err(SyntheticError::UnrecognizedPrompt(prompt.to_string()));
            }
            return Ok(if a1 == a2 { "Yes" } else { "No" }.to_string());
        }
        if let Some(line) = lines.iter().rev().find_map(|l| l.strip_prefix("Question: ")) {
            let id = self.id_for_stem(question_stem(line))?;
            let tl = &self.world.timelines[id];
            let first = &tl[0].1;
            let changes = tl.iter().any(|(_, a)| a != first);
            return Ok(if changes { "YES" } else { "NO" }.to_string());
        }
        let (_, answer) = self.answer(prompt)?;
        Ok(answer.to_string())
    }
}

impl Oracle for SyntheticOracle {
    fn complete(&self, prompt: &str) -> Result<String, OracleError> {
        if prompt.trim().is_empty() {
            return Err(OracleError::EmptyPrompt);
        }
        Ok(self.respond(prompt)?)
    }

    fn fingerprint(&self) -> String {
        "synthetic".to_string()
    }
}
