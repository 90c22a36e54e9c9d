//! Searching a year range for a probe whose answer differs from the anchor.
//!
//! Every strategy compares the anchor year (the range start) against some
//! sequence of candidate years and stops at the first `Different` verdict.
//! Strategies differ only in which candidates they visit and in what order:
//!
//! | strategy       | probes                                         | plan     |
//! |----------------|------------------------------------------------|----------|
//! | `linear`       | every candidate, ascending                     | static   |
//! | `skip:<s>`     | `start+s`, `start+2s`, ... up to `end`         | static   |
//! | `random:<k>`   | `k` distinct candidates drawn without replacement | static |
//! | `dac`          | midpoint of each interval, preorder, all years | adaptive |
//! | `dac:half-ltr` | midpoints, halving leftwards                   | adaptive |
//! | `dac:half-rtl` | midpoints, halving rightwards                  | adaptive |

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    DacVariant, EquivalenceVerdict, Label, Question, SearchOutcome, StrategySpec, TimeRange, Verdict, Year,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SearchError {
    #[error("{0} is a direct classification baseline, not a search strategy")]
    NotASearchStrategy(StrategySpec),
    #[error("skip interval must be at least 1")]
    InvalidInterval,
    #[error("cannot draw {samples} distinct years from {available} candidates")]
    TooManySamples { samples: u32, available: usize },
    #[error("random search needs a seed")]
    UnseededRandom,
    #[error("search aborted: {}", .0.error)]
    Aborted(Box<SearchFailure>),
}

/// A question whose search was cut short by an oracle failure. The partial
/// trace is kept for auditing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchFailure {
    pub question_id: String,
    pub strategy: StrategySpec,
    pub error: String,
    pub trace: Vec<EquivalenceVerdict>,
}

/// One row of an outcome file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Prediction {
    Outcome(SearchOutcome),
    Failure(SearchFailure),
}

impl Prediction {
    pub fn question_id(&self) -> &str {
        match self {
            Prediction::Outcome(o) => &o.question_id,
            Prediction::Failure(f) => &f.question_id,
        }
    }
}

/// What to do with a response that is neither yes nor no.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnparseablePolicy {
    /// Not evidence of ambiguity; keep searching.
    #[default]
    Same,
    /// Abort the question as a failure.
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchOptions {
    pub unparseable: UnparseablePolicy,
    /// Probes of a static plan issued concurrently per batch. 1 = sequential.
    pub fan_out: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            unparseable: UnparseablePolicy::Same,
            fan_out: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Adaptivity {
    Static,
    Adaptive,
}

/// Probe years fixed before the first comparison.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbePlan {
    pub years: Vec<Year>,
}

impl ProbePlan {
    pub fn len(&self) -> usize {
        self.years.len()
    }

    pub fn is_empty(&self) -> bool {
        self.years.is_empty()
    }
}

pub fn plan_linear(range: &TimeRange) -> ProbePlan {
    ProbePlan {
        years: range.candidates().collect(),
    }
}

pub fn plan_skip_list(range: &TimeRange, interval: u32) -> Result<ProbePlan, SearchError> {
    if interval == 0 {
        return Err(SearchError::InvalidInterval);
    }
    Ok(ProbePlan {
        years: range
            .candidates()
            .skip(interval as usize - 1)
            .step_by(interval as usize)
            .collect(),
    })
}

/// `samples` distinct candidates in draw order, fully determined by `seed`.
pub fn plan_random(range: &TimeRange, samples: u32, seed: u64) -> Result<ProbePlan, SearchError> {
    let available = range.candidate_count();
    if samples == 0 || samples as usize > available {
        return Err(SearchError::TooManySamples { samples, available });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = range.start_year() + 1;
    let years = index::sample(&mut rng, available, samples as usize)
        .into_iter()
        .map(|i| first + i as Year)
        .collect();
    Ok(ProbePlan { years })
}

/// Divide-and-conquer probe generator.
///
/// Each step probes the midpoint `floor((lo + hi) / 2)` of the current
/// candidate interval. A `Different` verdict ends the search. On `Same`:
/// - `Full` pushes both halves and visits them left first (preorder), so
///   every candidate is eventually probed;
/// - `HalfLtr` continues in the left half, or the right half when the left
///   one is empty;
/// - `HalfRtl` mirrors that, preferring the right half.
#[derive(Debug, Clone)]
pub struct DacSearch {
    variant: DacVariant,
    stack: Vec<(Year, Year)>,
    current: Option<(Year, Year, Year)>,
}

impl DacSearch {
    pub fn new(range: &TimeRange, variant: DacVariant) -> Self {
        DacSearch {
            variant,
            stack: vec![(range.start_year() + 1, range.end_year())],
            current: None,
        }
    }

    /// Next year to probe, or `None` once the search is over. Calling this
    /// twice without [`observe`](Self::observe) returns the same year.
    pub fn next_probe(&mut self) -> Option<Year> {
        if let Some((_, mid, _)) = self.current {
            return Some(mid);
        }
        let (lo, hi) = self.stack.pop()?;
        let mid = (lo + hi).div_euclid(2);
        self.current = Some((lo, mid, hi));
        Some(mid)
    }

    /// Feeds back the verdict for the year last returned by `next_probe`.
    pub fn observe(&mut self, same: bool) {
        let Some((lo, mid, hi)) = self.current.take() else {
            return;
        };
        if !same {
            self.stack.clear();
            return;
        }
        let left = (lo, mid - 1);
        let right = (mid + 1, hi);
        let nonempty = |(a, b): (Year, Year)| a <= b;
        match self.variant {
            DacVariant::Full => {
                for half in [right, left] {
                    if nonempty(half) {
                        self.stack.push(half);
                    }
                }
            }
            DacVariant::HalfLtr => {
                if let Some(h) = [left, right].into_iter().find(|&h| nonempty(h)) {
                    self.stack.push(h);
                }
            }
            DacVariant::HalfRtl => {
                if let Some(h) = [right, left].into_iter().find(|&h| nonempty(h)) {
                    self.stack.push(h);
                }
            }
        }
    }
}

pub fn adaptivity(spec: &StrategySpec) -> Adaptivity {
    match spec {
        StrategySpec::Dac(_) => Adaptivity::Adaptive,
        _ => Adaptivity::Static,
    }
}

/// The static plan for `spec`, or `None` for adaptive strategies.
pub fn static_plan(range: &TimeRange, spec: &StrategySpec) -> Result<Option<ProbePlan>, SearchError> {
    match spec {
        StrategySpec::Linear => Ok(Some(plan_linear(range))),
        StrategySpec::SkipList { interval } => plan_skip_list(range, *interval).map(Some),
        StrategySpec::Random { samples, seed } => {
            let seed = seed.ok_or(SearchError::UnseededRandom)?;
            plan_random(range, *samples, seed).map(Some)
        }
        StrategySpec::Dac(_) => Ok(None),
        StrategySpec::ZeroShot | StrategySpec::FewShot { .. } => Err(SearchError::NotASearchStrategy(spec.clone())),
    }
}

enum Step {
    Continue,
    Found,
}

struct Run<'a> {
    question: &'a Question,
    range: &'a TimeRange,
    spec: &'a StrategySpec,
    opts: &'a SearchOptions,
    trace: Vec<EquivalenceVerdict>,
}

impl Run<'_> {
    fn abort(self, error: String) -> SearchError {
        SearchError::Aborted(Box::new(SearchFailure {
            question_id: self.question.id.clone(),
            strategy: self.spec.clone(),
            error,
            trace: self.trace,
        }))
    }

    fn record(&mut self, year: Year, mut v: EquivalenceVerdict) -> Result<Step, String> {
        v.probe_year = year;
        let verdict = v.verdict;
        self.trace.push(v);
        match verdict {
            Verdict::Different => Ok(Step::Found),
            Verdict::Same => Ok(Step::Continue),
            Verdict::Unparseable => match self.opts.unparseable {
                UnparseablePolicy::Same => Ok(Step::Continue),
                UnparseablePolicy::Fail => Err(format!("unparseable equivalence response for {year}")),
            },
        }
    }

    fn finish(self, witness_year: Option<Year>) -> SearchOutcome {
        SearchOutcome {
            question_id: self.question.id.clone(),
            predicted: if witness_year.is_some() {
                Label::Ambiguous
            } else {
                Label::Unambiguous
            },
            witness: witness_year.map(|y| (self.range.start_year(), y)),
            comparisons: self.trace.len(),
            strategy: self.spec.clone(),
            trace: self.trace,
            raw_response: None,
            unparseable: false,
        }
    }
}

/// Runs one strategy over one question.
///
/// `equivalence(year)` compares the anchor variant with the `year` variant.
/// The search stops at the first `Different` verdict (witness = anchor and
/// that year); exhausting the probes yields `Unambiguous`. An equivalence
/// error aborts the question with [`SearchError::Aborted`].
///
/// With `opts.fan_out > 1`, static plans issue probes in concurrent batches;
/// the verdicts are still consumed in plan order, so the trace, witness and
/// comparison count are identical to a sequential run.
pub fn run_search<F, E>(
    q: &Question,
    range: &TimeRange,
    spec: &StrategySpec,
    opts: &SearchOptions,
    equivalence: F,
) -> Result<SearchOutcome, SearchError>
where
    F: Fn(Year) -> Result<EquivalenceVerdict, E> + Sync,
    E: std::fmt::Display + Send,
{
    let plan = static_plan(range, spec)?;
    let mut run = Run {
        question: q,
        range,
        spec,
        opts,
        trace: Vec::new(),
    };
    match plan {
        Some(plan) => {
            let batch = opts.fan_out.max(1);
            for chunk in plan.years.chunks(batch) {
                let results: Vec<Result<EquivalenceVerdict, E>> = if chunk.len() == 1 {
                    vec![equivalence(chunk[0])]
                } else {
                    std::thread::scope(|s| {
                        let handles: Vec<_> = chunk
                            .iter()
                            .map(|&y| {
                                let equivalence = &equivalence;
                                s.spawn(move || equivalence(y))
                            })
                            .collect();
                        handles
                            .into_iter()
                            .map(|h| h.join().expect("probe worker panicked"))
                            .collect()
                    })
                };
                for (&year, result) in chunk.iter().zip(results) {
                    let verdict = match result {
                        Ok(v) => v,
                        Err(e) => return Err(run.abort(e.to_string())),
                    };
                    match run.record(year, verdict) {
                        Ok(Step::Found) => return Ok(run.finish(Some(year))),
                        Ok(Step::Continue) => {}
                        Err(msg) => return Err(run.abort(msg)),
                    }
                }
            }
            Ok(run.finish(None))
        }
        None => {
            let StrategySpec::Dac(variant) = spec else {
                unreachable!("only divide-and-conquer strategies are adaptive")
            };
            let mut dac = DacSearch::new(range, *variant);
            while let Some(year) = dac.next_probe() {
                let verdict = match equivalence(year) {
                    Ok(v) => v,
                    Err(e) => return Err(run.abort(e.to_string())),
                };
                match run.record(year, verdict) {
                    Ok(Step::Found) => return Ok(run.finish(Some(year))),
                    Ok(Step::Continue) => dac.observe(true),
                    Err(msg) => return Err(run.abort(msg)),
                }
            }
            Ok(run.finish(None))
        }
    }
}

/// Probe years an adaptive strategy visits when every verdict is `Same`.
pub fn dac_full_path(range: &TimeRange, variant: DacVariant) -> Vec<Year> {
    let mut dac = DacSearch::new(range, variant);
    let mut out = Vec::new();
    while let Some(y) = dac.next_probe() {
        out.push(y);
        dac.observe(true);
    }
    out
}
