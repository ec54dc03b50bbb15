use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::Serialize;

use mission_profiler::classifier::{self, FeatureCatalog, ModelKind, TrainedModel};
use mission_profiler::corpus::{load_timelines, Corpus};
use mission_profiler::diversity::{cdf_csv, parse_group_range, Group};
use mission_profiler::error::{Error, Result};
use mission_profiler::mission::{fleiss_kappa, parse_ratings_csv, GlobalNormalization, DEFAULT_MIN_CLUSTER};
use mission_profiler::pipeline::{self, GroupStage, RunConfig, RunOptions, TopicsStage};
use mission_profiler::scores::{
    load_precomputed_scores, score_bots, score_toxicity, FileBackend, HttpBackend, MockBackend, ScoreCache,
    BotBackend, ScoringOptions, ScoringReport, ToxicityBackend,
};
use mission_profiler::synth::{generate, SynthSpec};
use mission_profiler::topics::{self, assign_topics, baseline_topic_assigner, save_tpvs, TopicCatalog};

#[derive(Parser)]
#[command(name = "mission-profiler", version, about = "Thematic-diversity profiling and on-mission account detection")]
struct Cli {
    /// Run configuration (TOML, or JSON by extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, normalize and filter timelines into a binary corpus cache.
    Ingest(IngestArgs),
    /// Fetch toxicity and bot scores into local caches.
    Score(ScoreArgs),
    /// Validate a TPV file or produce baseline TPVs.
    Topics(TopicsArgs),
    /// Compute category vectors, entropy and diversity groups.
    Group(GroupArgs),
    /// Compute per-profile metrics.
    Metrics(MetricsArgs),
    /// Label topics and designate on-mission clusters within a group.
    Detect(DetectArgs),
    /// Fleiss' kappa over an annotation matrix.
    Kappa(KappaArgs),
    /// Generate a synthetic corpus with ground truth.
    Synth(SynthArgs),
    /// Train a classifier on the training split of a labeled feature set.
    Train(TrainArgs),
    /// Evaluate a saved model on a labeled feature set.
    Evaluate(EvaluateArgs),
    /// Feature-subset × model ablation table.
    Ablate(AblateArgs),
    /// Apply a model to profiles of chosen diversity groups.
    Flag(FlagArgs),
    /// Print the report of a finished run.
    Report(ReportArgs),
    /// Run every stage from a configuration.
    Run(RunArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    tweets: PathBuf,
    #[arg(long)]
    profiles: Option<PathBuf>,
    /// Fail on the first malformed line instead of skipping it.
    #[arg(long)]
    strict: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Mock,
    File,
    Http,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum)]
    backend: Backend,
    /// Precomputed scores for the file backend.
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long)]
    toxicity_cache: PathBuf,
    #[arg(long)]
    bot_cache: PathBuf,
    /// Requests per second; 0 disables throttling.
    #[arg(long, default_value_t = 0.0)]
    rps: f64,
    #[arg(long, default_value_t = 3)]
    retries: u32,
    #[arg(long, default_value_t = 4)]
    workers: usize,
    /// Constant toxicity returned by the mock backend.
    #[arg(long, default_value_t = 0.1)]
    mock_toxicity: f64,
}

#[derive(Args)]
struct TopicSource {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, conflicts_with = "baseline")]
    tpv: Option<PathBuf>,
    /// Keyword-hash baseline TPVs instead of a TPV file.
    #[arg(long)]
    baseline: bool,
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Number of topics; taken from the catalog when one is given.
    #[arg(long, default_value_t = topics::DEFAULT_K)]
    k: usize,
}

#[derive(Args)]
struct TopicsArgs {
    #[command(flatten)]
    source: TopicSource,
}

#[derive(Args)]
struct GroupArgs {
    #[command(flatten)]
    source: TopicSource,
    /// Also write the entropy CDF as CSV.
    #[arg(long)]
    cdf: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    toxicity_cache: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    #[command(flatten)]
    source: TopicSource,
    #[arg(long)]
    toxicity_cache: Option<PathBuf>,
    #[arg(long, default_value = "VIII")]
    group: Group,
    #[arg(long, default_value_t = DEFAULT_MIN_CLUSTER)]
    min_cluster: usize,
    /// `pNN` percentile of topic median toxicities, or an absolute value.
    #[arg(long, default_value = "p75")]
    tox_gate: String,
    /// Divide the global topic sum by tweets instead of profiles.
    #[arg(long)]
    per_tweet: bool,
}

#[derive(Args)]
struct KappaArgs {
    #[arg(long)]
    ratings: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Archetype spec; 100 on-mission + 100 genuine profiles when absent.
    #[arg(long)]
    spec: Option<PathBuf>,
}

#[derive(Args)]
struct LabeledArgs {
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    features: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: LabeledArgs,
    #[arg(long, default_value = "svm")]
    model: ModelKind,
    /// Random rather than class-stratified split.
    #[arg(long)]
    unstratified: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: LabeledArgs,
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    data: LabeledArgs,
    #[arg(long)]
    unstratified: bool,
}

#[derive(Args)]
struct FlagArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// Group assignments written by `group`.
    #[arg(long)]
    assignments: PathBuf,
    #[arg(long, default_value = "II..VII")]
    groups: String,
    /// Profiles per group drawn for manual annotation.
    #[arg(long, default_value_t = 100)]
    sample: usize,
}

#[derive(Args)]
struct ReportArgs {
    /// Print JSON instead of tables.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct RunArgs {
    /// Overwrite outputs produced under a different configuration.
    #[arg(long)]
    force: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            warn!("could not size thread pool: {e}");
        }
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(1))
        }
    }
}

fn config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn seed(cli: &Cli) -> Result<u64> {
    Ok(config(cli)?.seed)
}

fn out_path(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn print_json(value: &impl Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Ingest(a) => ingest(cli, a),
        Command::Score(a) => score(a).map_err(|e| e.in_stage("score")),
        Command::Topics(a) => topics_cmd(cli, a).map_err(|e| e.in_stage("topics")),
        Command::Group(a) => group(cli, a).map_err(|e| e.in_stage("group")),
        Command::Metrics(a) => metrics(cli, a).map_err(|e| e.in_stage("metrics")),
        Command::Detect(a) => detect(cli, a).map_err(|e| e.in_stage("detect")),
        Command::Kappa(a) => kappa(a),
        Command::Synth(a) => synth(cli, a),
        Command::Train(a) => train(cli, a).map_err(|e| e.in_stage("classify")),
        Command::Evaluate(a) => evaluate(a).map_err(|e| e.in_stage("classify")),
        Command::Ablate(a) => ablate(cli, a).map_err(|e| e.in_stage("classify")),
        Command::Flag(a) => flag(cli, a).map_err(|e| e.in_stage("classify")),
        Command::Report(a) => report(cli, a),
        Command::Run(a) => run(cli, a),
    }
}

fn ingest(cli: &Cli, a: &IngestArgs) -> Result<()> {
    let corpus =
        load_timelines(&a.tweets, a.profiles.as_deref(), a.strict).map_err(|e| e.in_stage("ingest"))?;
    let out = out_path(cli, "corpus.bin");
    corpus.save(&out)?;
    let s = &corpus.ingest_stats;
    eprintln!(
        "{} profiles, {} tweets kept ({} lines, {} malformed, {} duplicate, {} short profiles dropped) -> {}",
        corpus.len(),
        s.kept_tweets,
        s.lines,
        s.malformed,
        s.duplicate,
        s.dropped_short_profiles,
        out.display()
    );
    Ok(())
}

fn load_cache(path: &Path) -> Result<ScoreCache> {
    if path.exists() {
        ScoreCache::load(path)
    } else {
        Ok(ScoreCache::default())
    }
}

fn score_with<B: ToxicityBackend + BotBackend>(
    corpus: &Corpus,
    backend: &B,
    cache: &mut ScoreCache,
    opts: &ScoringOptions,
) -> Result<(ScoringReport, ScoringReport)> {
    let tox = score_toxicity(corpus, backend, cache, opts)?;
    let bots = score_bots(corpus, backend, cache, opts)?;
    Ok((tox, bots))
}

fn score(a: &ScoreArgs) -> Result<()> {
    let corpus = Corpus::load(&a.corpus)?;
    let mut cache = load_cache(&a.toxicity_cache)?;
    cache.merge(load_cache(&a.bot_cache)?);
    let opts = ScoringOptions {
        rate_limit: a.rps,
        max_retries: a.retries,
        workers: a.workers.max(1),
        fetched_at: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .ok()
            .map(|d| d.as_secs() as i64),
        ..ScoringOptions::default()
    };
    let (tox, bots) = match a.backend {
        Backend::Mock => score_with(&corpus, &MockBackend::constant(a.mock_toxicity), &mut cache, &opts)?,
        Backend::File => {
            let p = a
                .scores
                .as_deref()
                .ok_or_else(|| Error::InvalidArgument("--backend file needs --scores".into()))?;
            score_with(&corpus, &FileBackend::from_cache(load_precomputed_scores(p)?), &mut cache, &opts)?
        }
        Backend::Http => score_with(&corpus, &HttpBackend::from_env()?, &mut cache, &opts)?,
    };
    ScoreCache {
        toxicity: cache.toxicity.clone(),
        bots: BTreeMap::new(),
    }
    .save(&a.toxicity_cache)?;
    ScoreCache {
        toxicity: BTreeMap::new(),
        bots: cache.bots,
    }
    .save(&a.bot_cache)?;
    eprintln!(
        "toxicity: {} fetched, {} cached, {} missing; bots: {} fetched, {} cached, {} missing",
        tox.fetched,
        tox.cached,
        tox.missing.len(),
        bots.fetched,
        bots.cached,
        bots.missing.len()
    );
    Ok(())
}

struct Topics {
    corpus: Corpus,
    catalog: TopicCatalog,
    stage: TopicsStage,
    cfg: RunConfig,
}

fn load_topics(cli: &Cli, s: &TopicSource) -> Result<Topics> {
    let corpus = Corpus::load(&s.corpus)?;
    let catalog = match &s.catalog {
        Some(p) => TopicCatalog::load(p)?,
        None => TopicCatalog::cyclic(s.k),
    };
    let mut cfg = config(cli)?;
    cfg.k = catalog.k();
    cfg.inputs.tpv = match (&s.tpv, s.baseline) {
        (Some(p), _) => Some(p.clone()),
        (None, true) => None,
        (None, false) => return Err(Error::InvalidArgument("give --tpv FILE or --baseline".into())),
    };
    let stage = pipeline::stage_topics(&cfg, &corpus)?;
    if stage.unknown_ids > 0 {
        warn!("{} TPV rows reference tweets not in the corpus", stage.unknown_ids);
    }
    Ok(Topics {
        corpus,
        catalog,
        stage,
        cfg,
    })
}

fn topics_cmd(cli: &Cli, a: &TopicsArgs) -> Result<()> {
    let t = if a.source.baseline {
        let corpus = Corpus::load(&a.source.corpus)?;
        let k = match &a.source.catalog {
            Some(p) => TopicCatalog::load(p)?.k(),
            None => a.source.k,
        };
        let tpvs = baseline_topic_assigner(&corpus, k, seed(cli)?);
        let out = out_path(cli, "tpv.jsonl");
        save_tpvs(&tpvs, &out)?;
        eprintln!("{} baseline TPVs over {k} topics -> {}", tpvs.len(), out.display());
        return Ok(());
    } else {
        load_topics(cli, &a.source)?
    };
    let asg = assign_topics(&t.stage.tpvs);
    let mut per_topic = vec![0usize; t.catalog.k()];
    for &topic in asg.values() {
        per_topic[topic] += 1;
    }
    eprintln!(
        "{} TPVs valid over {} topics; {} corpus tweets without a TPV; {} topics never dominant",
        t.stage.tpvs.len(),
        t.catalog.k(),
        t.stage.unassigned_tweets,
        per_topic.iter().filter(|&&c| c == 0).count()
    );
    if let Some(out) = &cli.out {
        save_tpvs(&t.stage.tpvs, out)?;
    }
    Ok(())
}

fn group(cli: &Cli, a: &GroupArgs) -> Result<()> {
    let t = load_topics(cli, &a.source)?;
    let stage = pipeline::stage_group(&t.corpus, &t.catalog, &assign_topics(&t.stage.tpvs))?;
    let (partition, mut rows) = stage.partition();
    for g in Group::ALL {
        eprintln!("{g}: {}", partition.size(g));
    }
    if !stage.ungrouped.is_empty() {
        warn!("{} profiles without topic-assigned tweets", stage.ungrouped.len());
    }
    write_json(&out_path(cli, "groups.json"), &stage)?;
    if let Some(p) = &a.cdf {
        rows.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)));
        write_text(p, &cdf_csv(&rows))?;
    }
    Ok(())
}

fn metrics(cli: &Cli, a: &MetricsArgs) -> Result<()> {
    let corpus = Corpus::load(&a.corpus)?;
    let cache = match &a.toxicity_cache {
        Some(p) => ScoreCache::load(p)?,
        None => ScoreCache::default(),
    };
    let bundles = pipeline::stage_metrics(&corpus, &cache);
    let mut text = String::new();
    for b in bundles.values() {
        text.push_str(&serde_json::to_string(b)?);
        text.push('\n');
    }
    let out = out_path(cli, "metrics.jsonl");
    write_text(&out, &text)?;
    eprintln!("{} profiles -> {}", bundles.len(), out.display());
    Ok(())
}

fn detect(cli: &Cli, a: &DetectArgs) -> Result<()> {
    let mut t = load_topics(cli, &a.source)?;
    let cache = match &a.toxicity_cache {
        Some(p) => ScoreCache::load(p)?,
        None => ScoreCache::default(),
    };
    t.cfg.mission.group = a.group;
    t.cfg.mission.min_cluster = a.min_cluster;
    t.cfg.mission.tox_gate = a.tox_gate.clone();
    t.cfg.mission.normalization = if a.per_tweet {
        GlobalNormalization::PerTweet
    } else {
        GlobalNormalization::PerProfile
    };
    t.cfg.tox_gate()?;
    let groups = pipeline::stage_group(&t.corpus, &t.catalog, &assign_topics(&t.stage.tpvs))?;
    let stage = pipeline::stage_detect(&t.cfg, &t.corpus, &t.catalog, &cache, &t.stage, &groups)?;
    for w in &stage.warnings {
        warn!("{w}");
    }
    match &stage.detection {
        Some(d) => {
            eprintln!(
                "group {}: {} profiles, {} on-mission, threshold {}",
                a.group,
                d.designations.len(),
                d.on_mission_count(),
                d.threshold.map_or("-".into(), |x| format!("{x:.4}"))
            );
            write_json(&out_path(cli, "designations.json"), d)
        }
        None => Ok(()),
    }
}

fn kappa(a: &KappaArgs) -> Result<()> {
    let text = fs::read_to_string(&a.ratings).map_err(|e| Error::io(&a.ratings, e))?;
    let (matrix, labels) = parse_ratings_csv(&text)?;
    let r = fleiss_kappa(&matrix)?;
    info!("categories: {}", labels.join(", "));
    print_json(&r)
}

fn synth(cli: &Cli, a: &SynthArgs) -> Result<()> {
    let spec = match &a.spec {
        Some(p) => SynthSpec::load(p)?,
        None => SynthSpec::balanced(100, 100),
    };
    let bundle = generate(&spec.archetypes, spec.k, seed(cli)?)?;
    let out = out_path(cli, "synth");
    bundle.write(&out)?;
    eprintln!("{} profiles over {} topics -> {}", bundle.labels.len(), bundle.k, out.display());
    Ok(())
}

fn labeled(a: &LabeledArgs) -> Result<classifier::LabeledSet> {
    let vectors = classifier::load_features(&a.features)?;
    let labels = classifier::load_labels(&a.labels)?;
    let set = classifier::labeled_set(&vectors, &labels);
    if set.labels.len() < labels.len() {
        warn!("{} labeled profiles have no feature vector", labels.len() - set.labels.len());
    }
    Ok(set)
}

fn train(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let cfg = config(cli)?;
    let set = labeled(&a.data)?;
    let split = classifier::split_80_20(&set.labels, cfg.seed, !a.unstratified)?;
    let (tx, ty) = set.rows(&split.train);
    let (vx, vy) = set.rows(&split.test);
    let catalog = FeatureCatalog::default();
    let all: Vec<usize> = (0..catalog.len()).collect();
    let mut model = classifier::train(a.model, &tx, &ty, &all, &catalog, &cfg.classifier.train, cfg.seed)?;
    model.config_hash = Some(cfg.hash());
    let report = classifier::evaluate(&model, &vx, &vy)?;
    model.save(&out_path(cli, "model.json"))?;
    print_json(&report)
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let model = TrainedModel::load(&a.model)?;
    let set = labeled(&a.data)?;
    let idx: Vec<usize> = (0..set.labels.len()).collect();
    let (x, y) = set.rows(&idx);
    print_json(&classifier::evaluate(&model, &x, &y)?)
}

fn ablate(cli: &Cli, a: &AblateArgs) -> Result<()> {
    let cfg = config(cli)?;
    let set = labeled(&a.data)?;
    let table = classifier::ablation(
        &set,
        &FeatureCatalog::default(),
        &cfg.classifier.train,
        cfg.seed,
        !a.unstratified,
    )?;
    for c in &table.cells {
        println!(
            "{:<16} {:<7} f1 {:.3} acc {:.3}",
            format!("{:?}", c.subset),
            c.model.short(),
            c.report.f1,
            c.report.accuracy
        );
    }
    if let Some(out) = &cli.out {
        write_json(out, &table)?;
    }
    Ok(())
}

fn flag(cli: &Cli, a: &FlagArgs) -> Result<()> {
    let model = TrainedModel::load(&a.model)?;
    let vectors = classifier::load_features(&a.features)?;
    let text = fs::read_to_string(&a.assignments).map_err(|e| Error::io(&a.assignments, e))?;
    let stage: GroupStage = serde_json::from_str(&text)?;
    let groups: Vec<Group> = parse_group_range(&a.groups)?;
    let of: BTreeMap<&str, Group> = stage.profiles.iter().map(|p| (p.profile_id.as_str(), p.group)).collect();
    let mut wild: BTreeMap<Group, Vec<_>> = groups.iter().map(|&g| (g, Vec::new())).collect();
    for v in vectors {
        if let Some(bucket) = of.get(v.profile_id.as_str()).and_then(|g| wild.get_mut(g)) {
            bucket.push(v);
        }
    }
    let report = classifier::flag_in_wild(&model, &wild, a.sample, seed(cli)?);
    for r in &report.rows {
        println!(
            "{:<5} {:>8} {:>8} {}",
            r.group,
            r.total,
            r.flagged,
            r.percentage.map_or("-".into(), |p| format!("{p:.2}%"))
        );
    }
    write_text(&out_path(cli, "predictions.jsonl"), &report.predictions_jsonl()?)
}

fn report(cli: &Cli, a: &ReportArgs) -> Result<()> {
    let dir = out_path(cli, "out");
    let expected = match &cli.config {
        Some(_) => Some(config(cli)?.hash()),
        None => None,
    };
    let report = pipeline::load_report(&dir, expected.as_deref())?;
    if a.json {
        print!("{}", report.to_json()?);
    } else {
        print!("{}", report.to_markdown());
    }
    Ok(())
}

fn run(cli: &Cli, a: &RunArgs) -> Result<()> {
    if cli.config.is_none() {
        return Err(Error::InvalidArgument("run needs --config FILE".into()));
    }
    let cfg = config(cli)?;
    let out = out_path(cli, "out");
    let outcome = pipeline::run_pipeline(&cfg, &out, &RunOptions { force: a.force })?;
    for w in &outcome.report.warnings {
        eprintln!("warning: {w}");
    }
    eprintln!(
        "config {}: {} stage(s) recomputed, {} reused -> {}",
        &outcome.config_hash[..12],
        outcome.recomputed.len(),
        outcome.reused.len(),
        out.display()
    );
    Ok(())
}
