use std::path::PathBuf;

use mission_profiler::corpus::load_timelines;
use mission_profiler::topics::{baseline_topic_assigner, load_tpvs, save_tpvs};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

#[test]
fn fixture_ingest_counts() {
    let c = load_timelines(&data("fixture_tweets.jsonl"), None, true).unwrap();
    assert_eq!(c.len(), 2);
    assert!(c.profiles.contains_key("alpha") && c.profiles.contains_key("charlie"));
    assert_eq!(c.ingest_stats.dropped_short_profiles, 1);
    assert_eq!(c.ingest_stats.duplicate, 1);
    assert!(c.ingest_stats.is_conserved());
}

/// Baseline TPVs for the fixture at seed 42, K = 20, must not drift.
#[test]
fn baseline_tpvs_match_golden() {
    let c = load_timelines(&data("fixture_tweets.jsonl"), None, true).unwrap();
    let tpvs = baseline_topic_assigner(&c, 20, 42);
    let golden = data("baseline_tpv_seed42.jsonl");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        save_tpvs(&tpvs, &golden).unwrap();
    }
    let expected = load_tpvs(&golden, 20).unwrap();
    assert_eq!(tpvs.len(), expected.len());
    for (id, t) in &tpvs {
        let e = &expected[id];
        for (a, b) in t.probs().iter().zip(e.probs()) {
            assert!((a - b).abs() < 1e-12, "{id}: {a} vs {b}");
        }
    }
    assert_ne!(baseline_topic_assigner(&c, 20, 43), tpvs);
}
