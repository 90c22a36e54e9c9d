//! Comparison-count model for the search strategies.
//!
//! Best case is one comparison (the first probe already differs). Worst case
//! is the number of probes issued when every verdict is `Same`. The average
//! case is estimated by sampling synthetic worlds and running the actual
//! search against the synthetic oracle.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::{test_equivalence, EquivalenceMode, EquivalencePromptTemplate};
use crate::domain::{DacVariant, Question, Source, StrategySpec, TimeRange, Year};
use crate::oracle::{SyntheticOracle, SyntheticWorld};
use crate::search::{dac_full_path, run_search, static_plan, SearchError, SearchOptions};
use crate::seeding::derive_seed;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EfficiencyError {
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("n_worlds must be at least 1")]
    NoWorlds,
    #[error("invalid change distribution {0:?}")]
    Distribution(String),
}

/// How synthetic worlds are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChangeDistribution {
    /// Exactly one answer change, at a candidate year drawn uniformly.
    UniformSingleChange,
    /// The answer never changes.
    NoChange,
    /// With probability `p` a uniform single change, otherwise no change.
    Mixture(f64),
}

impl fmt::Display for ChangeDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChangeDistribution::UniformSingleChange => f.write_str("uniform"),
            ChangeDistribution::NoChange => f.write_str("none"),
            ChangeDistribution::Mixture(p) => write!(f, "mixture:{p}"),
        }
    }
}

impl FromStr for ChangeDistribution {
    type Err = EfficiencyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "uniform" => Ok(ChangeDistribution::UniformSingleChange),
            "none" => Ok(ChangeDistribution::NoChange),
            other => {
                let p: f64 = other
                    .strip_prefix("mixture:")
                    .and_then(|p| p.parse().ok())
                    .ok_or_else(|| EfficiencyError::Distribution(s.to_string()))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(EfficiencyError::Distribution(s.to_string()));
                }
                Ok(ChangeDistribution::Mixture(p))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyEntry {
    pub strategy: StrategySpec,
    pub range: TimeRange,
    pub distribution: String,
    pub n_worlds: usize,
    pub seed: u64,
    pub best_case: usize,
    pub worst_case: usize,
    pub mean: f64,
    pub std: f64,
    pub min_observed: usize,
    pub max_observed: usize,
}

/// `(best, worst)` comparison counts for a search strategy over `range`.
pub fn efficiency_bounds(range: &TimeRange, spec: &StrategySpec) -> Result<(usize, usize), SearchError> {
    let worst = match spec {
        StrategySpec::Random { samples, .. } => {
            // Any seed: only the count matters, but the count is validated.
            static_plan(range, &spec.with_seed(0))?;
            *samples as usize
        }
        StrategySpec::Dac(DacVariant::Full) => range.candidate_count(),
        StrategySpec::Dac(variant) => dac_full_path(range, *variant).len(),
        _ => static_plan(range, spec)?.map(|p| p.len()).unwrap_or(0),
    };
    Ok((worst.min(1), worst))
}

const MC_QUESTION: &str = "which answer holds in this synthetic world?";

fn sample_world(range: &TimeRange, dist: ChangeDistribution, rng: &mut ChaCha8Rng) -> Vec<(Year, String)> {
    let changes = match dist {
        ChangeDistribution::UniformSingleChange => true,
        ChangeDistribution::NoChange => false,
        ChangeDistribution::Mixture(p) => rng.random_bool(p),
    };
    let mut timeline = vec![(range.start_year(), "before".to_string())];
    if changes {
        let year = rng.random_range(range.start_year() + 1..=range.end_year());
        timeline.push((year, "after".to_string()));
    }
    timeline
}

/// Average comparisons of `spec` over `n_worlds` sampled worlds.
///
/// World `i` is drawn from its own RNG seeded by `derive_seed(seed, i)`, so
/// results do not depend on thread scheduling. Random strategies draw a
/// fresh per-world sampling seed from the same RNG.
pub fn efficiency_monte_carlo(
    range: &TimeRange,
    spec: &StrategySpec,
    n_worlds: usize,
    dist: ChangeDistribution,
    seed: u64,
) -> Result<EfficiencyEntry, EfficiencyError> {
    if n_worlds == 0 {
        return Err(EfficiencyError::NoWorlds);
    }
    let (best, worst) = efficiency_bounds(range, spec)?;
    let question = Question::new("mc", MC_QUESTION, None, Source::Other).expect("non-empty");
    let template = EquivalencePromptTemplate::default();
    let counts: Vec<usize> = (0..n_worlds)
        .into_par_iter()
        .map(|i| -> Result<usize, EfficiencyError> {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
            let timeline = sample_world(range, dist, &mut rng);
            let world_spec = match spec {
                StrategySpec::Random { .. } => spec.with_seed(rng.next_u64()),
                other => other.clone(),
            };
            let mut world = SyntheticWorld::default();
            world.insert("mc", timeline).expect("sampled timeline is ordered");
            let oracle = SyntheticOracle::new(world, std::slice::from_ref(&question));
            let outcome = run_search(&question, range, &world_spec, &SearchOptions::default(), |y| {
                test_equivalence(&oracle, &template, &question, range, y, EquivalenceMode::DirectPrompt)
            })?;
            Ok(outcome.comparisons)
        })
        .collect::<Result<_, _>>()?;

    let n = counts.len() as f64;
    let mean = counts.iter().sum::<usize>() as f64 / n;
    let var = if counts.len() > 1 {
        counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(EfficiencyEntry {
        strategy: spec.clone(),
        range: *range,
        distribution: dist.to_string(),
        n_worlds,
        seed,
        best_case: best,
        worst_case: worst,
        mean,
        std: var.sqrt(),
        min_observed: counts.iter().copied().min().unwrap_or(0),
        max_observed: counts.iter().copied().max().unwrap_or(0),
    })
}
