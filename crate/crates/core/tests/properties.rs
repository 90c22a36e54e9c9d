mod common;

use std::sync::Arc;

use common::{answer_at, random_timeline, range, truly_ambiguous};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tempamb::baselines::{classify_direct, ClassificationPromptTemplate};
use tempamb::dataset::{self, ColumnMap, Dataset, DatasetFormat};
use tempamb::detection::{
    disambiguate, parse_equivalence, split_disambiguated, test_equivalence, EquivalenceMode, EquivalencePromptTemplate,
};
use tempamb::domain::{DacVariant, Label, Question, SearchOutcome, Source, StrategySpec, TimeRange, Verdict, Year};
use tempamb::evaluation::{efficiency_bounds, efficiency_monte_carlo, score, ChangeDistribution};
use tempamb::oracle::{CachedOracle, Oracle, ResponseCache, SyntheticOracle, SyntheticWorld};
use tempamb::search::{run_search, Prediction, SearchOptions};

fn strategies(seed: u64) -> Vec<StrategySpec> {
    vec![
        StrategySpec::Linear,
        StrategySpec::SkipList { interval: 1 },
        StrategySpec::SkipList { interval: 2 },
        StrategySpec::SkipList { interval: 3 },
        StrategySpec::SkipList { interval: 5 },
        StrategySpec::SkipList { interval: 10 },
        StrategySpec::Random {
            samples: 1,
            seed: Some(seed),
        },
        StrategySpec::Random {
            samples: 2,
            seed: Some(seed),
        },
        StrategySpec::Dac(DacVariant::Full),
        StrategySpec::Dac(DacVariant::HalfLtr),
        StrategySpec::Dac(DacVariant::HalfRtl),
    ]
}

struct Case {
    q: Question,
    r: TimeRange,
    timeline: Vec<(Year, String)>,
    oracle: SyntheticOracle,
}

fn case(world_seed: u64, start: Year, len: i32) -> Case {
    let r = range(start, start + len);
    let mut rng = ChaCha8Rng::seed_from_u64(world_seed);
    let timeline = random_timeline(&mut rng, &r);
    let q = Question::new("p", "what is the value of the property?", None, Source::Other).unwrap();
    let mut world = SyntheticWorld::default();
    world.insert("p", timeline.clone()).unwrap();
    let oracle = SyntheticOracle::new(world, std::slice::from_ref(&q));
    Case { q, r, timeline, oracle }
}

fn search(c: &Case, spec: &StrategySpec, opts: &SearchOptions) -> SearchOutcome {
    let tmpl = EquivalencePromptTemplate::default();
    run_search(&c.q, &c.r, spec, opts, |y| {
        test_equivalence(&c.oracle, &tmpl, &c.q, &c.r, y, EquivalenceMode::DirectPrompt)
    })
    .unwrap()
}

/// Closed-form upper bounds on comparisons.
fn formula_bound(r: &TimeRange, spec: &StrategySpec) -> usize {
    let n = r.candidate_count();
    match spec {
        StrategySpec::Linear | StrategySpec::Dac(DacVariant::Full) => n,
        StrategySpec::SkipList { interval } => n.div_ceil(*interval as usize),
        StrategySpec::Random { samples, .. } => *samples as usize,
        StrategySpec::Dac(_) => n.ilog2() as usize + 1,
        _ => unreachable!(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn outcome_invariants_hold(seed in any::<u64>(), start in 1950i32..2020, len in 2i32..40) {
        let c = case(seed, start, len);
        let linear = search(&c, &StrategySpec::Linear, &SearchOptions::default());
        for spec in strategies(seed) {
            if let StrategySpec::Random { samples, .. } = spec {
                if samples as usize > c.r.candidate_count() {
                    continue;
                }
            }
            let o = search(&c, &spec, &SearchOptions::default());
            // Ambiguous iff witness iff a Different verdict in the trace.
            let has_diff = o.trace.iter().any(|v| v.verdict == Verdict::Different);
            prop_assert_eq!(o.predicted == Label::Ambiguous, o.witness.is_some());
            prop_assert_eq!(o.witness.is_some(), has_diff);
            prop_assert!(o.check_invariants(&c.r).is_ok());
            // Soundness against the timeline itself.
            if let Some((t1, yk)) = o.witness {
                prop_assert_eq!(t1, c.r.start_year());
                prop_assert_ne!(answer_at(&c.timeline, t1), answer_at(&c.timeline, yk));
            }
            // Subsumption.
            if o.predicted == Label::Ambiguous {
                prop_assert_eq!(linear.predicted, Label::Ambiguous);
            }
            // Budget.
            let (best, worst) = efficiency_bounds(&c.r, &spec).unwrap();
            prop_assert!(o.comparisons <= worst);
            prop_assert!(worst <= formula_bound(&c.r, &spec));
            prop_assert!(worst <= c.r.candidate_count());
            prop_assert_eq!(best, worst.min(1));
            prop_assert_eq!(o.comparisons, o.trace.len());
            // Determinism.
            prop_assert_eq!(&search(&c, &spec, &SearchOptions::default()), &o);
            // Concurrent probing changes nothing observable.
            let fanned = SearchOptions { fan_out: 4, ..SearchOptions::default() };
            prop_assert_eq!(&search(&c, &spec, &fanned), &o);
        }
    }

    #[test]
    fn linear_and_full_dac_are_complete(seed in any::<u64>(), start in 1950i32..2020, len in 1i32..40) {
        let c = case(seed, start, len);
        let expected = if truly_ambiguous(&c.timeline, &c.r) { Label::Ambiguous } else { Label::Unambiguous };
        prop_assert_eq!(search(&c, &StrategySpec::Linear, &SearchOptions::default()).predicted, expected);
        prop_assert_eq!(search(&c, &StrategySpec::Dac(DacVariant::Full), &SearchOptions::default()).predicted, expected);
    }

    #[test]
    fn equivalence_modes_agree_on_synthetic_worlds(seed in any::<u64>(), start in 1950i32..2020, len in 1i32..30) {
        let c = case(seed, start, len);
        let tmpl = EquivalencePromptTemplate::default();
        for y in c.r.candidates() {
            let direct = test_equivalence(&c.oracle, &tmpl, &c.q, &c.r, y, EquivalenceMode::DirectPrompt).unwrap();
            let answers = test_equivalence(&c.oracle, &tmpl, &c.q, &c.r, y, EquivalenceMode::AnswerThenCompare).unwrap();
            prop_assert_eq!(direct.verdict, answers.verdict);
        }
    }

    #[test]
    fn cache_is_transparent(seed in any::<u64>(), start in 1950i32..2020, len in 1i32..30) {
        let c = case(seed, start, len);
        let cache = Arc::new(ResponseCache::in_memory());
        let cached = CachedOracle::new(Arc::new(case(seed, start, len).oracle), cache.clone());
        let tmpl = EquivalencePromptTemplate::default();
        for y in c.r.candidates() {
            let plain = test_equivalence(&c.oracle, &tmpl, &c.q, &c.r, y, EquivalenceMode::DirectPrompt).unwrap();
            let cold = test_equivalence(&cached, &tmpl, &c.q, &c.r, y, EquivalenceMode::DirectPrompt).unwrap();
            let warm = test_equivalence(&cached, &tmpl, &c.q, &c.r, y, EquivalenceMode::DirectPrompt).unwrap();
            prop_assert_eq!(&plain, &cold);
            prop_assert_eq!(&cold, &warm);
        }
        prop_assert_eq!(cache.len(), c.r.candidate_count());
    }

    #[test]
    fn disambiguation_has_exactly_one_suffix(
        text in "[A-Za-z][A-Za-z ,']{0,40}[?]{0,2}[ ]{0,3}",
        year in 1000i32..3000,
        other in 1000i32..3000,
    ) {
        let q = Question::new("x", &text, None, Source::Other).unwrap();
        let dq = disambiguate(&q, year);
        let suffix = format!(" as of {year}?");
        prop_assert!(dq.text.ends_with(&suffix));
        prop_assert_eq!(dq.text.matches(" as of ").count(), 1);
        let (stem, y) = split_disambiguated(&dq.text).unwrap();
        prop_assert_eq!(y, year);
        // Pinning a pinned question swaps the year instead of stacking suffixes.
        let repinned = disambiguate(&Question::new("x", &dq.text, None, Source::Other).unwrap(), other);
        prop_assert_eq!(repinned.text, format!("{stem} as of {other}?"));
    }

    #[test]
    fn verdict_parse_ignores_surrounding_whitespace(
        word in prop::sample::select(vec!["Yes", "No", "YES", "no.", "Yes!", "maybe", "", "No, they differ"]),
        pre in "[ \t\n]{0,3}",
        post in "[ \t\n]{0,3}",
    ) {
        let raw = format!("{pre}{word}{post}");
        prop_assert_eq!(parse_equivalence(&raw, 2001).verdict, parse_equivalence(word.trim(), 2001).verdict);
    }

    #[test]
    fn label_round_trips(amb in any::<bool>(), upper in any::<bool>()) {
        let l = if amb { Label::Ambiguous } else { Label::Unambiguous };
        let s = if upper { l.to_string().to_uppercase() } else { l.to_string() };
        prop_assert_eq!(s.parse::<Label>().unwrap(), l);
        let json = serde_json::to_string(&l).unwrap();
        prop_assert_eq!(serde_json::from_str::<Label>(&json).unwrap(), l);
    }

    #[test]
    fn dataset_round_trip(rows in prop::collection::vec(
        ("[a-z0-9]{1,8}", "[A-Za-z][A-Za-z ,'\"]{0,30}\\?", prop::option::of(any::<bool>()), 0usize..4),
        1..20,
    )) {
        let sources = [Source::ArchivalQA, Source::SituatedQA, Source::AmbigQA, Source::Other];
        let mut seen = std::collections::HashSet::new();
        let items: Vec<Question> = rows
            .into_iter()
            .filter(|(id, ..)| seen.insert(id.clone()))
            .map(|(id, text, label, src)| {
                let label = label.map(|a| if a { Label::Ambiguous } else { Label::Unambiguous });
                Question::new(id, &text, label, sources[src]).unwrap()
            })
            .collect();
        let ds = Dataset { items: items.clone(), source_path: "mem".into() };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        dataset::write_jsonl(&ds, std::fs::File::create(&path).unwrap()).unwrap();
        let back = dataset::load(&path, Some(DatasetFormat::Jsonl), &ColumnMap::default()).unwrap();
        prop_assert_eq!(&back.items, &items);
        prop_assert_eq!(dataset::stats(&back).unwrap().total, items.len());
    }

    #[test]
    fn score_is_permutation_invariant(
        labels in prop::collection::vec((any::<bool>(), any::<bool>()), 1..30),
        shuffle_seed in any::<u64>(),
    ) {
        let gold = Dataset {
            items: labels
                .iter()
                .enumerate()
                .map(|(i, (g, _))| {
                    let l = if *g { Label::Ambiguous } else { Label::Unambiguous };
                    Question::new(format!("q{i}"), "x?", Some(l), Source::Other).unwrap()
                })
                .collect(),
            source_path: "mem".into(),
        };
        let preds: Vec<Prediction> = labels
            .iter()
            .enumerate()
            .map(|(i, (_, p))| {
                Prediction::Outcome(SearchOutcome {
                    question_id: format!("q{i}"),
                    predicted: if *p { Label::Ambiguous } else { Label::Unambiguous },
                    witness: None,
                    comparisons: 0,
                    strategy: StrategySpec::ZeroShot,
                    trace: vec![],
                    raw_response: None,
                    unparseable: false,
                })
            })
            .collect();
        let a = score(&preds, &gold).unwrap();
        let mut shuffled = preds.clone();
        use rand::seq::SliceRandom;
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
        prop_assert_eq!(&score(&shuffled, &gold).unwrap(), &a);
        prop_assert_eq!(a.scored() + a.n_failed, labels.len());
        for m in [a.accuracy, a.precision, a.recall, a.f1] {
            prop_assert!((0.0..=1.0).contains(&m));
        }
    }
}

#[test]
fn baselines_never_carry_a_witness() {
    let world: SyntheticWorld =
        serde_json::from_str(r#"{"a": [[1990, "x"], [2010, "y"]], "b": [[1990, "z"]]}"#).unwrap();
    let qs = vec![
        Question::new("a", "who holds the title?", None, Source::Other).unwrap(),
        Question::new("b", "who built the bridge?", None, Source::Other).unwrap(),
    ];
    let oracle = SyntheticOracle::new(world, &qs);
    for tmpl in [
        ClassificationPromptTemplate::zero_shot(),
        ClassificationPromptTemplate::few_shot(),
    ] {
        for q in &qs {
            let o = classify_direct(&oracle, &tmpl, q, &StrategySpec::ZeroShot, Label::Unambiguous).unwrap();
            assert_eq!((o.witness, o.comparisons, o.trace.len()), (None, 0, 0));
            assert!(!serde_json::to_string(&o).unwrap().contains("probe_year"));
        }
    }
    assert_eq!(
        oracle
            .complete("Is it?\nQuestion: who holds the title?\nAnswer:")
            .unwrap(),
        "YES"
    );
}

#[test]
fn monte_carlo_worlds_stay_within_bounds_and_skipping_helps() {
    let r = range(2000, 2024);
    let mut means = Vec::new();
    for spec in [
        "linear",
        "skip:2",
        "skip:5",
        "skip:10",
        "random:2",
        "dac",
        "dac:half-ltr",
        "dac:half-rtl",
    ] {
        let spec: StrategySpec = spec.parse().unwrap();
        for dist in [
            ChangeDistribution::UniformSingleChange,
            ChangeDistribution::Mixture(0.3),
        ] {
            let e = efficiency_monte_carlo(&r, &spec, 2000, dist, 99).unwrap();
            assert!(
                e.min_observed >= e.best_case && e.max_observed <= e.worst_case,
                "{spec}"
            );
            assert!(e.best_case as f64 <= e.mean && e.mean <= e.worst_case as f64);
            if dist == ChangeDistribution::UniformSingleChange
                && matches!(spec, StrategySpec::Linear | StrategySpec::SkipList { .. })
            {
                means.push(e.mean);
            }
        }
    }
    assert!(means.windows(2).all(|w| w[0] >= w[1]), "{means:?}");
}
