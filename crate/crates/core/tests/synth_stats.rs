use std::collections::BTreeMap;

use mission_profiler::corpus::{load_timelines, Corpus};
use mission_profiler::diversity::{assign_group, diversity_profile, Group};
use mission_profiler::metrics::burstiness;
use mission_profiler::mission::top3_gap;
use mission_profiler::stats::median;
use mission_profiler::synth::{generate, ArchetypeSpec, BurstPattern, SynthBundle, SynthSpec};
use mission_profiler::topics::{assign_topics, load_tpvs, Assignments, TopicCatalog};

struct Loaded {
    bundle: SynthBundle,
    corpus: Corpus,
    assignments: Assignments,
    _dir: tempfile::TempDir,
}

fn load(specs: &[ArchetypeSpec], seed: u64) -> Loaded {
    let bundle = generate(specs, 20, seed).unwrap();
    let dir = tempfile::tempdir().unwrap();
    bundle.write(dir.path()).unwrap();
    let corpus = load_timelines(
        &dir.path().join("tweets.jsonl"),
        Some(&dir.path().join("profiles.jsonl")),
        true,
    )
    .unwrap();
    let tpvs = load_tpvs(&dir.path().join("tpv.jsonl"), 20).unwrap();
    Loaded {
        bundle,
        corpus,
        assignments: assign_topics(&tpvs),
        _dir: dir,
    }
}

#[test]
fn fifty_fifty_bundle_is_consistent() {
    let spec = SynthSpec::balanced(50, 50);
    let l = load(&spec.archetypes, 42);
    assert_eq!(l.corpus.len(), 100);
    assert_eq!(l.bundle.labels.values().filter(|&&on| on).count(), 50);
    for tweet in l.corpus.tweets() {
        assert!(l.assignments.contains_key(&tweet.tweet_id), "{} has no TPV", tweet.tweet_id);
        let tox = l.bundle.scores.toxicity_of(&tweet.tweet_id).expect("toxicity score");
        assert!((0.0..=1.0).contains(&tox));
    }
    assert_eq!(l.bundle.scores.bots.len(), 100);
    let again = generate(&spec.archetypes, 20, 42).unwrap();
    assert_eq!(again, l.bundle);
}

#[test]
fn periodic_pattern_gives_minus_one() {
    let mut spec = ArchetypeSpec::genuine(20);
    spec.burst_pattern = BurstPattern::Periodic;
    let l = load(&[spec], 7);
    for tl in l.corpus.profiles.values() {
        let b = burstiness(&tl.timestamps()).unwrap().b;
        assert!((b + 1.0).abs() < 0.05, "{}: B = {b}", tl.profile_id);
    }
}

#[test]
fn bursty_exceeds_poisson() {
    let l = load(&SynthSpec::balanced(30, 30).archetypes, 3);
    let by = |on: bool| {
        let v: Vec<f64> = l
            .corpus
            .profiles
            .values()
            .filter(|tl| l.bundle.labels[&tl.profile_id] == on)
            .filter_map(|tl| burstiness(&tl.timestamps()).map(|b| b.b))
            .collect();
        median(&v).unwrap()
    };
    let (bursty, poisson) = (by(true), by(false));
    assert!(bursty > 0.3, "bursty archetype median B {bursty}");
    assert!(poisson.abs() < 0.15, "poisson archetype median B {poisson}");
}

#[test]
fn archetype_contrasts() {
    let l = load(&SynthSpec::balanced(100, 100).archetypes, 42);
    let catalog = TopicCatalog::cyclic(20);
    let mut entropy: BTreeMap<bool, Vec<f64>> = BTreeMap::new();
    let mut dominant_tox: BTreeMap<bool, Vec<f64>> = BTreeMap::new();
    let mut gap12: BTreeMap<bool, Vec<f64>> = BTreeMap::new();
    for tl in l.corpus.profiles.values() {
        let on = l.bundle.labels[&tl.profile_id];
        entropy
            .entry(on)
            .or_default()
            .push(diversity_profile(tl, &catalog, &l.assignments).unwrap().entropy);
        let mut counts = [0usize; 20];
        for t in &tl.tweets {
            counts[l.assignments[&t.tweet_id]] += 1;
        }
        let dominant = (0..20).max_by_key(|&t| (counts[t], std::cmp::Reverse(t))).unwrap();
        let tox: Vec<f64> = tl
            .tweets
            .iter()
            .filter(|t| l.assignments[&t.tweet_id] == dominant)
            .filter_map(|t| l.bundle.scores.toxicity_of(&t.tweet_id))
            .collect();
        dominant_tox.entry(on).or_default().push(median(&tox).unwrap());
        let n = tl.tweets.len() as f64;
        let shares: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
        gap12.entry(on).or_default().push(top3_gap(&shares).unwrap().0);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let h_on = mean(&entropy[&true]);
    let g = assign_group(h_on).unwrap();
    assert!(matches!(g, Group::VI | Group::VII | Group::VIII), "on-mission mean H {h_on} in {g}");
    let tox_gap = median(&dominant_tox[&true]).unwrap() - median(&dominant_tox[&false]).unwrap();
    assert!(tox_gap >= 0.2, "dominant-topic toxicity gap {tox_gap}");
    assert!(median(&gap12[&true]).unwrap() > median(&gap12[&false]).unwrap());
}
