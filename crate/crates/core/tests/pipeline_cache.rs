use std::fs;
use std::path::Path;

use mission_profiler::pipeline::{run_pipeline, ClassifierConfig, Inputs, RunConfig, RunOptions};
use mission_profiler::synth::{generate, SynthSpec};

fn setup(dir: &Path) -> RunConfig {
    let bundle = generate(&SynthSpec::balanced(12, 12).archetypes, 20, 11).unwrap();
    let data = dir.join("data");
    bundle.write(&data).unwrap();
    RunConfig {
        seed: 11,
        k: 20,
        inputs: Inputs {
            tweets: Some(data.join("tweets.jsonl")),
            profiles: Some(data.join("profiles.jsonl")),
            tpv: Some(data.join("tpv.jsonl")),
            scores: Some(data.join("scores.jsonl")),
            catalog: None,
            labels: Some(data.join("labels.csv")),
        },
        classifier: ClassifierConfig {
            ablation: false,
            ..ClassifierConfig::default()
        },
        ..RunConfig::default()
    }
}

fn sorted(mut v: Vec<String>) -> Vec<String> {
    v.sort();
    v
}

#[test]
fn changed_scores_rerun_only_downstream_stages() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path());
    let out = dir.path().join("out");
    run_pipeline(&cfg, &out, &RunOptions::default()).unwrap();

    let scores = cfg.inputs.scores.clone().unwrap();
    let text = fs::read_to_string(&scores).unwrap();
    let trimmed: Vec<&str> = text.lines().filter(|l| !l.contains("genuine_0003_0001")).collect();
    fs::write(&scores, trimmed.join("\n") + "\n").unwrap();

    let run = run_pipeline(&cfg, &out, &RunOptions::default()).unwrap();
    assert_eq!(sorted(run.reused), ["group", "ingest", "topics"]);
    assert_eq!(
        sorted(run.recomputed),
        ["classify", "detect", "metrics", "report", "score"]
    );
    assert!(run.report.warnings.iter().any(|w| w.contains("without a toxicity score")));
}

#[test]
fn corrupt_cache_entry_is_recomputed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path());
    let out = dir.path().join("out");
    let first = run_pipeline(&cfg, &out, &RunOptions::default()).unwrap();
    fs::write(out.join("cache/metrics.json"), b"{ truncated").unwrap();
    let second = run_pipeline(&cfg, &out, &RunOptions::default()).unwrap();
    assert_eq!(second.recomputed, ["metrics"]);
    assert_eq!(second.report, first.report);
}

#[test]
fn outputs_carry_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path());
    let out = dir.path().join("out");
    let run = run_pipeline(&cfg, &out, &RunOptions::default()).unwrap();
    for f in ["report.json", "model.json", "manifest.json"] {
        let text = fs::read_to_string(out.join(f)).unwrap();
        assert!(text.contains(&run.config_hash), "{f} lacks the config hash");
    }
    let md = fs::read_to_string(out.join("report.md")).unwrap();
    assert!(md.contains(&run.config_hash));
}
