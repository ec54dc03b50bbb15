//! End-to-end orchestration: ingest → score → topics → group → metrics →
//! detect → classify → report.
//!
//! Each stage's output is cached under `<out>/cache/<stage>.json` together
//! with a key hashed from its inputs and the relevant configuration, so an
//! unchanged rerun recomputes nothing. A lock file keeps one pipeline per
//! output directory.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::{
    self, extract_features, flag_in_wild, split_80_20, AblationTable, EvalReport, FeatureCatalog,
    FeatureInputs, FeatureVector, ModelKind, TrainConfig, TrainedModel, WildReport, WildRow,
    MIN_EXAMPLES,
};
use crate::corpus::{load_timelines, Corpus};
use crate::diversity::{cdf_csv, diversity_profile, group_partition, DiversityProfile, Group, GroupPartition};
use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, LexicalMetrics, MetricBundle};
use crate::mission::{
    detect_clusters, global_topic_average, ntpv, overlap_evidence, top3_gap, topic_label, Detection,
    GlobalNormalization, TopicLabelAssignment, ToxGate, DEFAULT_MIN_CLUSTER,
};
use crate::scores::{
    bot_score_summary, load_precomputed_scores, score_bots, score_toxicity, BotSummary, FileBackend,
    HttpBackend, MockBackend, ScoreCache, ScoringOptions,
};
use crate::stats::{five_number_summary, median};
use crate::topics::{
    assign_topics, baseline_topic_assigner, load_tpvs, topic_aggregates, Assignments, Category, TopicAggregate,
    TopicCatalog, TpvMap,
};

pub const REPORT_FORMAT: &str = "mission-profiler/report";
pub const REPORT_VERSION: u32 = 1;
pub const LOCK_FILE: &str = ".mission-profiler.lock";
pub const MANIFEST_FILE: &str = "manifest.json";

pub const STAGES: [&str; 8] = ["ingest", "score", "topics", "group", "metrics", "detect", "classify", "report"];

// ---------------------------------------------------------------- config

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub tweets: Option<PathBuf>,
    pub profiles: Option<PathBuf>,
    /// Per-tweet topic probability vectors; a keyword-hash baseline is used when absent.
    pub tpv: Option<PathBuf>,
    /// Precomputed toxicity / bot scores.
    pub scores: Option<PathBuf>,
    /// Topic → category map; cyclic over the categories when absent.
    pub catalog: Option<PathBuf>,
    /// Ground-truth `profile_id,label` file for training.
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub strict: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// File backend when `inputs.scores` is set, otherwise none.
    #[default]
    Auto,
    None,
    File,
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringConfig {
    pub backend: BackendKind,
    pub mock_toxicity: f64,
    pub rate_limit: f64,
    pub max_retries: u32,
    pub workers: usize,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Auto,
            mock_toxicity: 0.1,
            rate_limit: 0.0,
            max_retries: 3,
            workers: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MissionConfig {
    pub group: Group,
    pub min_cluster: usize,
    /// `pNN` for a percentile of topic median toxicities, or an absolute value.
    pub tox_gate: String,
    pub normalization: GlobalNormalization,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            group: Group::VIII,
            min_cluster: DEFAULT_MIN_CLUSTER,
            tox_gate: "p75".into(),
            normalization: GlobalNormalization::PerProfile,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub model: ModelKind,
    pub stratified: bool,
    pub ablation: bool,
    pub train: TrainConfig,
    pub wild_groups: Vec<Group>,
    pub sample_per_group: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::LinearSvm,
            stratified: true,
            ablation: true,
            train: TrainConfig::default(),
            wild_groups: Group::ALL[1..7].to_vec(),
            sample_per_group: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub k: usize,
    pub inputs: Inputs,
    pub ingest: IngestConfig,
    pub scoring: ScoringConfig,
    pub mission: MissionConfig,
    pub classifier: ClassifierConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            k: crate::synth::DEFAULT_K,
            inputs: Inputs::default(),
            ingest: IngestConfig::default(),
            scoring: ScoringConfig::default(),
            mission: MissionConfig::default(),
            classifier: ClassifierConfig::default(),
        }
    }
}

impl RunConfig {
    /// TOML, or JSON when the file ends in `.json`. Relative input paths are
    /// resolved against the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?
        };
        if let Some(base) = path.parent() {
            cfg.resolve_relative(base);
        }
        Ok(cfg)
    }

    pub fn resolve_relative(&mut self, base: &Path) {
        let i = &mut self.inputs;
        for p in [
            &mut i.tweets,
            &mut i.profiles,
            &mut i.tpv,
            &mut i.scores,
            &mut i.catalog,
            &mut i.labels,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn tox_gate(&self) -> Result<ToxGate> {
        self.mission.tox_gate.parse()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("config: {m}")));
        if self.k < 2 {
            return bad("k must be ≥ 2");
        }
        if self.inputs.tweets.is_none() {
            return bad("inputs.tweets is required");
        }
        if self.mission.min_cluster == 0 {
            return bad("mission.min_cluster must be ≥ 1");
        }
        self.tox_gate()?;
        let t = &self.classifier.train;
        if !(t.svm.c > 0.0 && t.svm.c.is_finite()) || t.svm.epochs == 0 {
            return bad("classifier.train.svm needs c > 0 and epochs ≥ 1");
        }
        if t.forest.n_trees == 0 || t.tree.min_leaf == 0 || t.forest.tree.min_leaf == 0 {
            return bad("tree settings need min_leaf ≥ 1 and n_trees ≥ 1");
        }
        if !(self.scoring.mock_toxicity >= 0.0 && self.scoring.mock_toxicity <= 1.0) {
            return bad("scoring.mock_toxicity must be in [0,1]");
        }
        if self.scoring.backend == BackendKind::File && self.inputs.scores.is_none() {
            return bad("scoring.backend = file needs inputs.scores");
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }
}

// ---------------------------------------------------------------- hashing / cache

struct KeyBuilder(Sha256);

impl KeyBuilder {
    fn new(stage: &str) -> Self {
        let mut h = Sha256::new();
        h.update(stage.as_bytes());
        h.update([0]);
        KeyBuilder(h)
    }

    fn part(mut self, bytes: impl AsRef<[u8]>) -> Self {
        let b = bytes.as_ref();
        self.0.update((b.len() as u64).to_le_bytes());
        self.0.update(b);
        self
    }

    fn json(self, v: &impl Serialize) -> Self {
        self.part(serde_json::to_vec(v).expect("serializable"))
    }

    fn file(self, path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(self.part(b"-")),
            Some(p) => Ok(self.part(file_digest(p)?)),
        }
    }

    fn finish(self) -> String {
        hex::encode(self.0.finalize())
    }
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

#[derive(Serialize)]
struct EnvelopeOut<'a, T> {
    stage: &'a str,
    key: &'a str,
    value: &'a T,
}

#[derive(Deserialize)]
struct EnvelopeIn<T> {
    key: String,
    value: T,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

struct StageCache {
    dir: PathBuf,
    recomputed: Vec<String>,
    reused: Vec<String>,
}

impl StageCache {
    fn new(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self {
            dir,
            recomputed: Vec::new(),
            reused: Vec::new(),
        })
    }

    fn run<T: Serialize + DeserializeOwned>(
        &mut self,
        stage: &'static str,
        key: &str,
        compute: impl FnOnce() -> Result<T>,
    ) -> Result<T> {
        let path = self.dir.join(format!("{stage}.json"));
        if let Ok(bytes) = fs::read(&path) {
            match serde_json::from_slice::<EnvelopeIn<T>>(&bytes) {
                Ok(env) if env.key == key => {
                    info!("stage {stage}: cached");
                    self.reused.push(stage.into());
                    return Ok(env.value);
                }
                Ok(_) => info!("stage {stage}: inputs changed, recomputing"),
                Err(e) => warn!("stage {stage}: unreadable cache ({e}), recomputing"),
            }
        }
        info!("stage {stage}: running");
        let value = compute().map_err(|e| e.in_stage(stage))?;
        let bytes = serde_json::to_vec(&EnvelopeOut {
            stage,
            key,
            value: &value,
        })
        .map_err(|e| Error::from(e).in_stage(stage))?;
        write_atomic(&path, &bytes).map_err(|e| e.in_stage(stage))?;
        self.recomputed.push(stage.into());
        Ok(value)
    }
}

/// Holds the output-directory lock; released on drop.
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                use std::io::Write;
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(path)),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

// ---------------------------------------------------------------- stages

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreStage {
    pub cache: ScoreCache,
    pub backend: String,
    pub toxicity_missing: usize,
    pub bots_missing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicsStage {
    pub source: String,
    pub tpvs: TpvMap,
    /// TPV rows whose tweet id is not in the corpus.
    pub unknown_ids: usize,
    /// Corpus tweets without a TPV.
    pub unassigned_tweets: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStage {
    pub profiles: Vec<DiversityProfile>,
    /// Profiles without any topic-assigned tweet.
    pub ungrouped: Vec<String>,
}

impl GroupStage {
    pub fn partition(&self) -> (GroupPartition, Vec<(Group, f64)>) {
        group_partition(&self.profiles)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectStage {
    pub global_avg: Vec<f64>,
    pub aggregates: Vec<TopicAggregate>,
    /// Topic label of every profile with at least one TPV.
    pub labels: Vec<TopicLabelAssignment>,
    /// Gaps between the top three topic shares of each profile's tweets.
    pub gaps: BTreeMap<String, Option<(f64, f64)>>,
    pub group: Group,
    pub detection: Option<Detection>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyStage {
    pub label_source: String,
    pub n_labeled: usize,
    pub n_positive: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub feature_count: usize,
    pub features: Vec<FeatureVector>,
    pub model: Option<TrainedModel>,
    pub evaluation: Option<EvalReport>,
    pub ablation: Option<AblationTable>,
    pub wild: Option<WildReport>,
    pub warnings: Vec<String>,
}

pub fn catalog_for(cfg: &RunConfig) -> Result<TopicCatalog> {
    let catalog = match &cfg.inputs.catalog {
        Some(p) => TopicCatalog::load(p)?,
        None => TopicCatalog::cyclic(cfg.k),
    };
    if catalog.k() != cfg.k {
        return Err(Error::InvalidArgument(format!(
            "catalog lists {} topics but k = {}",
            catalog.k(),
            cfg.k
        )));
    }
    Ok(catalog)
}

pub fn stage_ingest(cfg: &RunConfig) -> Result<Corpus> {
    let tweets = cfg
        .inputs
        .tweets
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument("no tweets input".into()))?;
    let corpus = load_timelines(tweets, cfg.inputs.profiles.as_deref(), cfg.ingest.strict)?;
    if corpus.is_empty() {
        warn!("no profile has at least {} tweets", crate::corpus::MIN_TIMELINE_TWEETS);
    }
    Ok(corpus)
}

pub fn stage_score(cfg: &RunConfig, corpus: &Corpus) -> Result<ScoreStage> {
    let opts = ScoringOptions {
        rate_limit: cfg.scoring.rate_limit,
        max_retries: cfg.scoring.max_retries,
        workers: cfg.scoring.workers.max(1),
        ..ScoringOptions::default()
    };
    let kind = match cfg.scoring.backend {
        BackendKind::Auto if cfg.inputs.scores.is_some() => BackendKind::File,
        BackendKind::Auto => BackendKind::None,
        k => k,
    };
    let mut cache = ScoreCache::default();
    let (tox, bots) = match kind {
        BackendKind::None | BackendKind::Auto => (None, None),
        BackendKind::File => {
            let path = cfg.inputs.scores.as_deref().expect("validated");
            let backend = FileBackend::from_cache(load_precomputed_scores(path)?);
            let t = score_toxicity(corpus, &backend, &mut cache, &opts)?;
            let b = score_bots(corpus, &backend, &mut cache, &opts)?;
            (Some(t), Some(b))
        }
        BackendKind::Mock => {
            let backend = MockBackend::constant(cfg.scoring.mock_toxicity);
            let t = score_toxicity(corpus, &backend, &mut cache, &opts)?;
            let b = score_bots(corpus, &backend, &mut cache, &opts)?;
            (Some(t), Some(b))
        }
        BackendKind::Http => {
            let backend = HttpBackend::from_env()?;
            let t = score_toxicity(corpus, &backend, &mut cache, &opts)?;
            let b = score_bots(corpus, &backend, &mut cache, &opts)?;
            (Some(t), Some(b))
        }
    };
    let n_tweets: usize = corpus
        .tweets()
        .map(|t| t.tweet_id.as_str())
        .collect::<BTreeSet<_>>()
        .len();
    let toxicity_missing = tox.as_ref().map_or(n_tweets, |r| r.missing.len());
    let bots_missing = bots.as_ref().map_or(corpus.len(), |r| r.missing.len());
    Ok(ScoreStage {
        cache,
        backend: format!("{kind:?}").to_lowercase(),
        toxicity_missing,
        bots_missing,
    })
}

pub fn stage_topics(cfg: &RunConfig, corpus: &Corpus) -> Result<TopicsStage> {
    let (source, all) = match &cfg.inputs.tpv {
        Some(p) => ("file", load_tpvs(p, cfg.k)?),
        None => ("baseline", baseline_topic_assigner(corpus, cfg.k, cfg.seed)),
    };
    let ids: BTreeSet<&str> = corpus.tweets().map(|t| t.tweet_id.as_str()).collect();
    let total_rows = all.len();
    let tpvs: TpvMap = all.into_iter().filter(|(id, _)| ids.contains(id.as_str())).collect();
    Ok(TopicsStage {
        source: source.into(),
        unknown_ids: total_rows - tpvs.len(),
        unassigned_tweets: ids.len() - tpvs.len(),
        tpvs,
    })
}

pub fn stage_group(corpus: &Corpus, catalog: &TopicCatalog, assignments: &Assignments) -> Result<GroupStage> {
    let mut profiles = Vec::new();
    let mut ungrouped = Vec::new();
    for tl in corpus.profiles.values() {
        if tl.tweets.iter().any(|t| assignments.contains_key(&t.tweet_id)) {
            profiles.push(diversity_profile(tl, catalog, assignments)?);
        } else {
            ungrouped.push(tl.profile_id.clone());
        }
    }
    Ok(GroupStage { profiles, ungrouped })
}

pub fn stage_metrics(corpus: &Corpus, scores: &ScoreCache) -> BTreeMap<String, MetricBundle> {
    corpus
        .profiles
        .par_iter()
        .map(|(id, tl)| (id.clone(), compute_metrics(tl, scores)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

pub fn stage_detect(
    cfg: &RunConfig,
    corpus: &Corpus,
    catalog: &TopicCatalog,
    scores: &ScoreCache,
    topics: &TopicsStage,
    groups: &GroupStage,
) -> Result<DetectStage> {
    let assignments = assign_topics(&topics.tpvs);
    let aggregates = topic_aggregates(&assignments, scores, cfg.k);
    let mut warnings = Vec::new();
    let mut out = DetectStage {
        global_avg: Vec::new(),
        aggregates,
        labels: Vec::new(),
        gaps: BTreeMap::new(),
        group: cfg.mission.group,
        detection: None,
        warnings: Vec::new(),
    };

    let per_profile: Vec<(&str, Vec<&crate::topics::Tpv>)> = corpus
        .profiles
        .values()
        .map(|tl| {
            let v: Vec<_> = tl.tweets.iter().filter_map(|t| topics.tpvs.get(&t.tweet_id)).collect();
            (tl.profile_id.as_str(), v)
        })
        .filter(|(_, v)| !v.is_empty())
        .collect();
    if per_profile.is_empty() {
        warnings.push("no tweet has a topic vector; detection skipped".into());
        out.warnings = warnings;
        return Ok(out);
    }
    out.global_avg = global_topic_average(
        per_profile.iter().flat_map(|(_, v)| v.iter().copied()),
        per_profile.len(),
        cfg.mission.normalization,
    )?;
    for (id, tpvs) in &per_profile {
        let n = ntpv(id, tpvs, &out.global_avg)?;
        out.labels.push(topic_label(&n, catalog, &out.aggregates));
    }
    for tl in corpus.profiles.values() {
        let mut counts = vec![0.0; cfg.k];
        let mut n = 0.0;
        for t in &tl.tweets {
            if let Some(&topic) = assignments.get(&t.tweet_id) {
                counts[topic] += 1.0;
                n += 1.0;
            }
        }
        if n > 0.0 {
            counts.iter_mut().for_each(|c| *c /= n);
            out.gaps.insert(tl.profile_id.clone(), top3_gap(&counts));
        }
    }

    let (partition, _) = groups.partition();
    let members: BTreeSet<&str> = partition
        .groups
        .get(&cfg.mission.group)
        .map(|v| v.iter().map(String::as_str).collect())
        .unwrap_or_default();
    let group_labels: Vec<TopicLabelAssignment> = out
        .labels
        .iter()
        .filter(|l| members.contains(l.profile_id.as_str()))
        .cloned()
        .collect();
    if group_labels.is_empty() {
        warnings.push(format!("group {} has no profiles; detection skipped", cfg.mission.group));
    } else {
        let mut det = detect_clusters(&group_labels, &out.aggregates, cfg.mission.min_cluster, cfg.tox_gate()?)?;
        for cluster in det.clusters.iter_mut().filter(|c| c.members.len() >= det.min_cluster) {
            let metas: Vec<(&str, &crate::corpus::ProfileMetadata)> = cluster
                .members
                .iter()
                .filter_map(|id| corpus.profiles.get(id))
                .filter(|tl| tl.has_metadata)
                .map(|tl| (tl.profile_id.as_str(), &tl.metadata))
                .collect();
            let ev = overlap_evidence(&metas);
            cluster.friend_overlap = ev.friend_overlap;
            cluster.shared_retweet_ratio = ev.shared_retweet_ratio;
        }
        let by_topic: BTreeMap<usize, (Option<f64>, Option<f64>)> = det
            .clusters
            .iter()
            .map(|c| (c.topic, (c.friend_overlap, c.shared_retweet_ratio)))
            .collect();
        for d in det.designations.iter_mut() {
            if let Some((f, r)) = d.cluster_id.and_then(|t| by_topic.get(&t)) {
                d.evidence.friend_overlap = *f;
                d.evidence.shared_retweet_ratio = *r;
            }
            d.evidence.top3_gaps = out.gaps.get(&d.profile_id).copied().flatten();
        }
        if det.threshold.is_none() {
            warnings.push("no topic has toxicity scores; nothing designated on-mission".into());
        }
        out.detection = Some(det);
    }
    out.warnings = warnings;
    Ok(out)
}

pub fn feature_vectors(
    corpus: &Corpus,
    groups: &GroupStage,
    metrics: &BTreeMap<String, MetricBundle>,
) -> Vec<FeatureVector> {
    let counts: BTreeMap<&str, &[usize; 8]> = groups
        .profiles
        .iter()
        .map(|p| (p.profile_id.as_str(), &p.category_counts))
        .collect();
    metrics
        .par_iter()
        .map(|(id, m)| {
            extract_features(&FeatureInputs {
                profile_id: id,
                category_counts: counts.get(id.as_str()).copied(),
                metrics: m,
                metadata: &corpus.profiles[id].metadata,
            })
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn stage_classify(
    cfg: &RunConfig,
    config_hash: &str,
    corpus: &Corpus,
    groups: &GroupStage,
    metrics: &BTreeMap<String, MetricBundle>,
    detect: &DetectStage,
) -> Result<ClassifyStage> {
    let catalog = FeatureCatalog::default();
    let features = feature_vectors(corpus, groups, metrics);
    let mut warnings = Vec::new();
    let (label_source, labels) = match &cfg.inputs.labels {
        Some(p) => {
            let labels = classifier::load_labels(p)?;
            let unknown = labels.keys().filter(|id| !metrics.contains_key(*id)).count();
            if unknown > 0 {
                warnings.push(format!("{unknown} labeled profile(s) are not in the corpus"));
            }
            ("labels_file", labels)
        }
        None => (
            "detection",
            detect
                .detection
                .iter()
                .flat_map(|d| d.designations.iter())
                .map(|d| (d.profile_id.clone(), d.label.is_on_mission()))
                .collect(),
        ),
    };
    let set = classifier::labeled_set(&features, &labels);
    let n_positive = set.labels.iter().filter(|&&l| l).count();
    let mut out = ClassifyStage {
        label_source: label_source.into(),
        n_labeled: set.labels.len(),
        n_positive,
        n_train: 0,
        n_test: 0,
        feature_count: catalog.len(),
        features,
        model: None,
        evaluation: None,
        ablation: None,
        wild: None,
        warnings: Vec::new(),
    };
    if set.labels.len() < MIN_EXAMPLES || n_positive == 0 || n_positive == set.labels.len() {
        warnings.push(format!(
            "classifier skipped: {} labeled profile(s), {} on-mission; need ≥ {MIN_EXAMPLES} with both classes",
            set.labels.len(),
            n_positive
        ));
        out.warnings = warnings;
        return Ok(out);
    }
    let split = match split_80_20(&set.labels, cfg.seed, cfg.classifier.stratified) {
        Ok(s) => s,
        Err(e) => {
            warnings.push(format!("classifier skipped: {e}"));
            out.warnings = warnings;
            return Ok(out);
        }
    };
    let (train_x, train_y) = set.rows(&split.train);
    let (test_x, test_y) = set.rows(&split.test);
    let all: Vec<usize> = (0..catalog.len()).collect();
    let mut model = classifier::train(
        cfg.classifier.model,
        &train_x,
        &train_y,
        &all,
        &catalog,
        &cfg.classifier.train,
        cfg.seed,
    )?;
    model.config_hash = Some(config_hash.to_owned());
    out.n_train = split.train.len();
    out.n_test = split.test.len();
    out.evaluation = Some(classifier::evaluate(&model, &test_x, &test_y)?);
    if cfg.classifier.ablation {
        out.ablation = Some(classifier::ablation(
            &set,
            &catalog,
            &cfg.classifier.train,
            cfg.seed,
            cfg.classifier.stratified,
        )?);
    }

    let trained: BTreeSet<&str> = split.train.iter().map(|&i| set.vectors[i].profile_id.as_str()).collect();
    let (partition, _) = groups.partition();
    let by_id: BTreeMap<&str, &FeatureVector> = out.features.iter().map(|v| (v.profile_id.as_str(), v)).collect();
    let mut wild: BTreeMap<Group, Vec<FeatureVector>> = BTreeMap::new();
    for &g in &cfg.classifier.wild_groups {
        let vs = partition
            .groups
            .get(&g)
            .into_iter()
            .flatten()
            .filter(|id| !trained.contains(id.as_str()))
            .filter_map(|id| by_id.get(id.as_str()).map(|v| (*v).clone()))
            .collect();
        wild.insert(g, vs);
    }
    out.wild = Some(flag_in_wild(&model, &wild, cfg.classifier.sample_per_group, cfg.seed));
    out.model = Some(model);
    out.warnings = warnings;
    Ok(out)
}

// ---------------------------------------------------------------- report

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub lines: usize,
    pub malformed: usize,
    pub duplicate: usize,
    pub dropped_short_profiles: usize,
    pub kept_tweets: usize,
    pub profiles: usize,
    pub profiles_without_metadata: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringSummary {
    pub backend: String,
    pub toxicity_scored: usize,
    pub toxicity_missing: usize,
    pub bots_scored: usize,
    pub bots_missing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexicalSummary {
    pub flesch_ease: f64,
    pub flesch_kincaid_grade: f64,
    pub linsear_write: f64,
    pub ari: f64,
    pub lexical_diversity_mtld: f64,
    pub chars_per_tweet: f64,
    pub words_per_tweet: f64,
    pub n_profiles: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivitySummary {
    pub mean_tweets: f64,
    pub mean_unique: f64,
    pub mean_retweets: f64,
    pub median_burstiness: Option<f64>,
    pub median_delta_days: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HashtagSummary {
    pub mean_total: f64,
    pub mean_unique: f64,
    pub mean_per_tweet: f64,
    pub mean_urls_per_tweet: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetadataSummary {
    pub n_with_metadata: usize,
    pub mean_followers: Option<f64>,
    pub mean_following: Option<f64>,
    /// Mean following over mean followers.
    pub following_follower_ratio: Option<f64>,
    pub mean_listed: Option<f64>,
    pub mean_statuses: Option<f64>,
    pub mean_favourites: Option<f64>,
    pub verified_pct: Option<f64>,
    pub geo_enabled_pct: Option<f64>,
    pub has_location_pct: Option<f64>,
    pub mean_description_len: Option<f64>,
    pub mean_account_age_days: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: Group,
    pub n_profiles: usize,
    pub share_pct: f64,
    /// min, q1, median, q3, max of per-profile median toxicity.
    pub toxicity_median: Option<[f64; 5]>,
    pub toxicity_gini: Option<[f64; 5]>,
    pub lexical: Option<LexicalSummary>,
    pub activity: ActivitySummary,
    pub hashtags: HashtagSummary,
    pub bots: BotSummary,
    pub metadata: MetadataSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRow {
    pub topic: usize,
    pub category: Category,
    pub size: usize,
    pub share_pct: f64,
    pub median_toxicity: Option<f64>,
    pub on_mission: bool,
    pub friend_overlap: Option<f64>,
    pub shared_retweet_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterTable {
    pub group: Group,
    pub n_profiles: usize,
    pub threshold: Option<f64>,
    pub min_cluster: usize,
    pub on_mission: usize,
    pub not_on_mission: usize,
    /// Clusters of at least `min_cluster` profiles.
    pub rows: Vec<ClusterRow>,
    /// Profiles in smaller clusters.
    pub misc_profiles: usize,
    pub median_gap12_on_mission: Option<f64>,
    pub median_gap12_not_on_mission: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSummary {
    pub model: ModelKind,
    pub label_source: String,
    pub n_labeled: usize,
    pub n_positive: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub feature_count: usize,
    pub evaluation: EvalReport,
    pub ablation: Option<AblationTable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRow {
    pub profile_id: String,
    pub group: Group,
    pub prediction: bool,
    pub score: f64,
    pub topic_label: Option<usize>,
    pub category: Option<Category>,
    pub topic_median_toxicity: Option<f64>,
    pub gap12: Option<f64>,
    pub gap23: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub k: usize,
    pub topic_source: String,
    pub ingest: IngestSummary,
    pub scoring: ScoringSummary,
    pub groups: Vec<GroupSummary>,
    pub clusters: Option<ClusterTable>,
    pub classifier: Option<ClassifierSummary>,
    pub wild: Option<Vec<WildRow>>,
    pub annotation_sample: Vec<AnnotationRow>,
    pub warnings: Vec<String>,
}

/// Per-profile series behind the plot CSVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub profile_id: String,
    pub group: Group,
    pub entropy: f64,
    pub toxicity_median: Option<f64>,
    pub toxicity_gini: Option<f64>,
    pub n_tweets: usize,
    pub n_unique: usize,
    pub hashtags_total: usize,
    pub hashtags_unique: usize,
    pub hashtags_per_tweet: f64,
    pub burstiness: Option<f64>,
    pub delta_days_hist: BTreeMap<i64, usize>,
    pub creation_year: Option<i32>,
    pub on_mission: Option<bool>,
    pub gap: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub rows: Vec<PlotRow>,
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut n = 0usize;
    let mut s = 0.0;
    for v in values {
        s += v;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

fn pct(count: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| 100.0 * count as f64 / total as f64)
}

fn lexical_summary(items: &[&LexicalMetrics]) -> Option<LexicalSummary> {
    if items.is_empty() {
        return None;
    }
    let m = |f: fn(&LexicalMetrics) -> f64| mean(items.iter().map(|x| f(x))).expect("non-empty");
    Some(LexicalSummary {
        flesch_ease: m(|x| x.flesch_ease),
        flesch_kincaid_grade: m(|x| x.flesch_kincaid_grade),
        linsear_write: m(|x| x.linsear_write),
        ari: m(|x| x.ari),
        lexical_diversity_mtld: m(|x| x.lexical_diversity_mtld),
        chars_per_tweet: m(|x| x.chars_per_tweet),
        words_per_tweet: m(|x| x.words_per_tweet),
        n_profiles: items.len(),
    })
}

fn group_summary(
    group: Group,
    ids: &[String],
    total: usize,
    corpus: &Corpus,
    metrics: &BTreeMap<String, MetricBundle>,
    scores: &ScoreCache,
) -> Result<GroupSummary> {
    let ms: Vec<&MetricBundle> = ids.iter().filter_map(|id| metrics.get(id)).collect();
    let tox: Vec<f64> = ms.iter().filter_map(|m| m.toxicity.median).collect();
    let gini: Vec<f64> = ms.iter().filter_map(|m| m.toxicity.gini).collect();
    let lex: Vec<&LexicalMetrics> = ms.iter().filter_map(|m| m.lexical.as_ref()).collect();
    let burst: Vec<f64> = ms.iter().filter_map(|m| m.activity.burstiness).collect();
    let delta: Vec<f64> = ms.iter().filter_map(|m| m.activity.median_delta_days).collect();
    let metas: Vec<&crate::corpus::ProfileMetadata> = ids
        .iter()
        .filter_map(|id| corpus.profiles.get(id))
        .filter(|tl| tl.has_metadata)
        .map(|tl| &tl.metadata)
        .collect();
    let ages: Vec<f64> = ms
        .iter()
        .filter(|m| corpus.profiles.get(&m.profile_id).is_some_and(|tl| tl.has_metadata))
        .filter_map(|m| m.derived.account_age_days)
        .collect();
    let nm = metas.len();
    let mf = |f: fn(&crate::corpus::ProfileMetadata) -> f64| mean(metas.iter().map(|m| f(m)));
    let followers = mf(|m| m.followers as f64);
    let following = mf(|m| m.following as f64);
    Ok(GroupSummary {
        group,
        n_profiles: ids.len(),
        share_pct: pct(ids.len(), total).unwrap_or(0.0),
        toxicity_median: five_number_summary(&tox),
        toxicity_gini: five_number_summary(&gini),
        lexical: lexical_summary(&lex),
        activity: ActivitySummary {
            mean_tweets: mean(ms.iter().map(|m| m.activity.n_tweets as f64)).unwrap_or(0.0),
            mean_unique: mean(ms.iter().map(|m| m.activity.n_unique as f64)).unwrap_or(0.0),
            mean_retweets: mean(ms.iter().map(|m| m.activity.n_retweets as f64)).unwrap_or(0.0),
            median_burstiness: median(&burst),
            median_delta_days: median(&delta),
        },
        hashtags: HashtagSummary {
            mean_total: mean(ms.iter().map(|m| m.hashtags.total_hashtags as f64)).unwrap_or(0.0),
            mean_unique: mean(ms.iter().map(|m| m.hashtags.unique_hashtags as f64)).unwrap_or(0.0),
            mean_per_tweet: mean(ms.iter().map(|m| m.hashtags.hashtags_per_tweet)).unwrap_or(0.0),
            mean_urls_per_tweet: mean(ms.iter().map(|m| m.hashtags.urls_per_tweet)).unwrap_or(0.0),
        },
        bots: bot_score_summary(ids.iter().map(String::as_str), scores)?,
        metadata: MetadataSummary {
            n_with_metadata: nm,
            mean_followers: followers,
            mean_following: following,
            following_follower_ratio: match (following, followers) {
                (Some(a), Some(b)) if b > 0.0 => Some(a / b),
                _ => None,
            },
            mean_listed: mf(|m| m.listed as f64),
            mean_statuses: mf(|m| m.statuses as f64),
            mean_favourites: mf(|m| m.favourites as f64),
            verified_pct: pct(metas.iter().filter(|m| m.verified).count(), nm),
            geo_enabled_pct: pct(metas.iter().filter(|m| m.geo_enabled).count(), nm),
            has_location_pct: pct(metas.iter().filter(|m| m.has_location).count(), nm),
            mean_description_len: mf(|m| m.description_len as f64),
            mean_account_age_days: mean(ages),
        },
    })
}

fn cluster_table(detect: &DetectStage, det: &Detection) -> ClusterTable {
    let n = det.designations.len();
    let rows: Vec<ClusterRow> = det
        .clusters
        .iter()
        .filter(|c| c.members.len() >= det.min_cluster)
        .map(|c| ClusterRow {
            topic: c.topic,
            category: c.category,
            size: c.members.len(),
            share_pct: pct(c.members.len(), n).unwrap_or(0.0),
            median_toxicity: c.median_toxicity,
            on_mission: c.on_mission,
            friend_overlap: c.friend_overlap,
            shared_retweet_ratio: c.shared_retweet_ratio,
        })
        .collect();
    let in_rows: usize = rows.iter().map(|r| r.size).sum();
    let gap12 = |on: bool| {
        let v: Vec<f64> = det
            .designations
            .iter()
            .filter(|d| d.label.is_on_mission() == on)
            .filter_map(|d| detect.gaps.get(&d.profile_id).copied().flatten())
            .map(|g| g.0)
            .collect();
        median(&v)
    };
    ClusterTable {
        group: detect.group,
        n_profiles: n,
        threshold: det.threshold,
        min_cluster: det.min_cluster,
        on_mission: det.on_mission_count(),
        not_on_mission: n - det.on_mission_count(),
        rows,
        misc_profiles: n - in_rows,
        median_gap12_on_mission: gap12(true),
        median_gap12_not_on_mission: gap12(false),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn build_report(
    cfg: &RunConfig,
    config_hash: &str,
    corpus: &Corpus,
    score: &ScoreStage,
    topics: &TopicsStage,
    groups: &GroupStage,
    metrics: &BTreeMap<String, MetricBundle>,
    detect: &DetectStage,
    classify: &ClassifyStage,
) -> Result<(Report, PlotData)> {
    let st = &corpus.ingest_stats;
    let mut warnings = Vec::new();
    if corpus.is_empty() {
        warnings.push(format!(
            "corpus is empty after ingest (profiles need ≥ {} tweets)",
            crate::corpus::MIN_TIMELINE_TWEETS
        ));
    }
    if st.malformed > 0 {
        warnings.push(format!("{} malformed line(s) skipped", st.malformed));
    }
    if st.duplicate > 0 {
        warnings.push(format!("{} duplicate tweet(s) dropped", st.duplicate));
    }
    if st.dropped_short_profiles > 0 {
        warnings.push(format!(
            "{} profile(s) dropped with fewer than {} tweets",
            st.dropped_short_profiles,
            crate::corpus::MIN_TIMELINE_TWEETS
        ));
    }
    if score.toxicity_missing > 0 {
        warnings.push(format!("{} tweet(s) without a toxicity score", score.toxicity_missing));
    }
    if score.bots_missing > 0 {
        warnings.push(format!("{} profile(s) without bot scores", score.bots_missing));
    }
    if topics.unknown_ids > 0 {
        warnings.push(format!("{} topic row(s) reference unknown tweets", topics.unknown_ids));
    }
    if !groups.ungrouped.is_empty() {
        warnings.push(format!(
            "{} profile(s) have no topic-assigned tweet and are not grouped",
            groups.ungrouped.len()
        ));
    }
    if corpus.tweets().all(|t| t.hashtags.is_empty()) && !corpus.is_empty() {
        warnings.push("corpus contains no hashtags".into());
    }
    warnings.extend(detect.warnings.iter().cloned());
    warnings.extend(classify.warnings.iter().cloned());
    for w in &warnings {
        warn!("{w}");
    }

    let (partition, _) = groups.partition();
    let total = partition.total();
    let mut group_rows = Vec::new();
    for (g, ids) in &partition.groups {
        group_rows.push(group_summary(*g, ids, total, corpus, metrics, &score.cache)?);
    }

    let clusters = detect.detection.as_ref().map(|d| cluster_table(detect, d));
    let classifier = match (&classify.model, &classify.evaluation) {
        (Some(m), Some(e)) => Some(ClassifierSummary {
            model: m.kind,
            label_source: classify.label_source.clone(),
            n_labeled: classify.n_labeled,
            n_positive: classify.n_positive,
            n_train: classify.n_train,
            n_test: classify.n_test,
            feature_count: classify.feature_count,
            evaluation: e.clone(),
            ablation: classify.ablation.clone(),
        }),
        _ => None,
    };

    let labels: BTreeMap<&str, &TopicLabelAssignment> =
        detect.labels.iter().map(|l| (l.profile_id.as_str(), l)).collect();
    let mut annotation_sample = Vec::new();
    if let Some(w) = &classify.wild {
        let preds: BTreeMap<&str, (bool, f64)> = w
            .predictions
            .iter()
            .map(|p| (p.profile_id.as_str(), (p.prediction, p.score)))
            .collect();
        for (g, ids) in &w.samples {
            for id in ids {
                let l = labels.get(id.as_str());
                let gap = detect.gaps.get(id).copied().flatten();
                let (prediction, score) = preds[id.as_str()];
                annotation_sample.push(AnnotationRow {
                    profile_id: id.clone(),
                    group: *g,
                    prediction,
                    score,
                    topic_label: l.map(|l| l.topic_label),
                    category: l.map(|l| l.label_category),
                    topic_median_toxicity: l.and_then(|l| l.label_median_toxicity),
                    gap12: gap.map(|g| g.0),
                    gap23: gap.map(|g| g.1),
                });
            }
        }
    }

    let designations: BTreeMap<&str, bool> = detect
        .detection
        .iter()
        .flat_map(|d| d.designations.iter())
        .map(|d| (d.profile_id.as_str(), d.label.is_on_mission()))
        .collect();
    let plot_rows = groups
        .profiles
        .iter()
        .filter_map(|p| {
            let m = metrics.get(&p.profile_id)?;
            Some(PlotRow {
                profile_id: p.profile_id.clone(),
                group: p.group,
                entropy: p.entropy,
                toxicity_median: m.toxicity.median,
                toxicity_gini: m.toxicity.gini,
                n_tweets: m.activity.n_tweets,
                n_unique: m.activity.n_unique,
                hashtags_total: m.hashtags.total_hashtags,
                hashtags_unique: m.hashtags.unique_hashtags,
                hashtags_per_tweet: m.hashtags.hashtags_per_tweet,
                burstiness: m.activity.burstiness,
                delta_days_hist: m.activity.delta_days_hist.clone(),
                creation_year: m.derived.creation_year.filter(|_| corpus.profiles[&p.profile_id].has_metadata),
                on_mission: designations.get(p.profile_id.as_str()).copied(),
                gap: detect.gaps.get(&p.profile_id).copied().flatten(),
            })
        })
        .collect();

    let report = Report {
        format: REPORT_FORMAT.into(),
        version: REPORT_VERSION,
        config_hash: config_hash.into(),
        seed: cfg.seed,
        k: cfg.k,
        topic_source: topics.source.clone(),
        ingest: IngestSummary {
            lines: st.lines,
            malformed: st.malformed,
            duplicate: st.duplicate,
            dropped_short_profiles: st.dropped_short_profiles,
            kept_tweets: st.kept_tweets,
            profiles: corpus.len(),
            profiles_without_metadata: st.profiles_without_metadata,
        },
        scoring: ScoringSummary {
            backend: score.backend.clone(),
            toxicity_scored: score.cache.toxicity.len(),
            toxicity_missing: score.toxicity_missing,
            bots_scored: score.cache.bots.len(),
            bots_missing: score.bots_missing,
        },
        groups: group_rows,
        clusters,
        classifier,
        wild: classify.wild.as_ref().map(|w| w.rows.clone()),
        annotation_sample,
        warnings,
    };
    Ok((report, PlotData { rows: plot_rows }))
}

// ---------------------------------------------------------------- rendering

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.3}"))
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Plain-text tables.
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# Mission profiler report\n");
        let _ = writeln!(s, "config hash `{}`, seed {}, K = {}, topics from {}\n", self.config_hash, self.seed, self.k, self.topic_source);
        let i = &self.ingest;
        let _ = writeln!(
            s,
            "Ingest: {} lines, {} kept tweets, {} profiles ({} malformed, {} duplicate, {} short profiles dropped).\n",
            i.lines, i.kept_tweets, i.profiles, i.malformed, i.duplicate, i.dropped_short_profiles
        );

        let _ = writeln!(s, "## Groups\n");
        let _ = writeln!(s, "| group | profiles | share % | tox median (q1/med/q3) | gini median | burstiness median | bot O (mean±sd) | spammer (mean±sd) |");
        let _ = writeln!(s, "|---|---|---|---|---|---|---|---|");
        for g in &self.groups {
            let tq = g.toxicity_median.map_or("-".into(), |b| format!("{:.3}/{:.3}/{:.3}", b[1], b[2], b[3]));
            let ms = |m: Option<crate::scores::MeanStd>| m.map_or("-".into(), |m| format!("{:.2}±{:.2}", m.mean, m.std));
            let _ = writeln!(
                s,
                "| {} | {} | {:.2} | {} | {} | {} | {} | {} |",
                g.group,
                g.n_profiles,
                g.share_pct,
                tq,
                opt(g.toxicity_gini.map(|b| b[2])),
                opt(g.activity.median_burstiness),
                ms(g.bots.overall),
                ms(g.bots.spammer)
            );
        }

        let _ = writeln!(s, "\n## Lexical diversity\n");
        let _ = writeln!(s, "| group | FRE | FK grade | Linsear | ARI | MTLD | chars/tweet | words/tweet |");
        let _ = writeln!(s, "|---|---|---|---|---|---|---|---|");
        for g in &self.groups {
            if let Some(l) = &g.lexical {
                let _ = writeln!(
                    s,
                    "| {} | {:.2} | {:.2} | {:.2} | {:.2} | {:.2} | {:.2} | {:.2} |",
                    g.group,
                    l.flesch_ease,
                    l.flesch_kincaid_grade,
                    l.linsear_write,
                    l.ari,
                    l.lexical_diversity_mtld,
                    l.chars_per_tweet,
                    l.words_per_tweet
                );
            }
        }

        let _ = writeln!(s, "\n## Profile metadata\n");
        let _ = writeln!(s, "| group | with metadata | followers | following | following/followers | listed | statuses | verified % | location % | account age (days) |");
        let _ = writeln!(s, "|---|---|---|---|---|---|---|---|---|---|");
        for g in &self.groups {
            let m = &g.metadata;
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
                g.group,
                m.n_with_metadata,
                opt(m.mean_followers),
                opt(m.mean_following),
                opt(m.following_follower_ratio),
                opt(m.mean_listed),
                opt(m.mean_statuses),
                opt(m.verified_pct),
                opt(m.has_location_pct),
                opt(m.mean_account_age_days)
            );
        }

        if let Some(c) = &self.clusters {
            let _ = writeln!(
                s,
                "\n## Topic clusters (group {}, threshold {}, min cluster {})\n",
                c.group,
                opt(c.threshold),
                c.min_cluster
            );
            let _ = writeln!(s, "| topic | category | profiles | share % | median toxicity | friend overlap | shared retweets | on-mission |");
            let _ = writeln!(s, "|---|---|---|---|---|---|---|---|");
            for r in &c.rows {
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {:.2} | {} | {} | {} | {} |",
                    r.topic,
                    r.category.name(),
                    r.size,
                    r.share_pct,
                    opt(r.median_toxicity),
                    opt(r.friend_overlap),
                    opt(r.shared_retweet_ratio),
                    if r.on_mission { "yes" } else { "no" }
                );
            }
            let _ = writeln!(
                s,
                "\n{} on-mission, {} not on-mission, {} in clusters below the size floor.",
                c.on_mission, c.not_on_mission, c.misc_profiles
            );
        }

        if let Some(c) = &self.classifier {
            let e = &c.evaluation;
            let _ = writeln!(s, "\n## Classifier ({}, labels from {})\n", c.model, c.label_source);
            let _ = writeln!(
                s,
                "{} labeled ({} on-mission), train {}, test {}, {} features. Test F1 {:.3}, accuracy {:.3} (tp {}, tn {}, fp {}, fn {}).",
                c.n_labeled, c.n_positive, c.n_train, c.n_test, c.feature_count, e.f1, e.accuracy, e.tp, e.tn, e.fp, e.fn_
            );
            if let Some(a) = &c.ablation {
                let _ = writeln!(s, "\n| features | svm F1 | svm acc | tree F1 | tree acc | forest F1 | forest acc |");
                let _ = writeln!(s, "|---|---|---|---|---|---|---|");
                for subset in classifier::FeatureSubset::ALL {
                    let _ = write!(s, "| {subset:?} |");
                    for kind in ModelKind::ALL {
                        match a.cell(subset, kind) {
                            Some(cell) => {
                                let _ = write!(s, " {:.3} | {:.3} |", cell.report.f1, cell.report.accuracy);
                            }
                            None => s.push_str(" - | - |"),
                        }
                    }
                    s.push('\n');
                }
            }
        }

        if let Some(w) = &self.wild {
            let _ = writeln!(s, "\n## Flagged in the wild\n");
            let _ = writeln!(s, "| group | profiles | flagged | % |");
            let _ = writeln!(s, "|---|---|---|---|");
            for r in w {
                let _ = writeln!(s, "| {} | {} | {} | {} |", r.group, r.total, r.flagged, opt(r.percentage));
            }
        }

        if !self.annotation_sample.is_empty() {
            let _ = writeln!(s, "\n## Annotation sample\n");
            let _ = writeln!(s, "| profile | group | flagged | score | topic | category | topic toxicity | gap12 | gap23 |");
            let _ = writeln!(s, "|---|---|---|---|---|---|---|---|---|");
            for r in &self.annotation_sample {
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {:.3} | {} | {} | {} | {} | {} |",
                    r.profile_id,
                    r.group,
                    r.prediction,
                    r.score,
                    r.topic_label.map_or("-".into(), |t| t.to_string()),
                    r.category.map_or("-", |c| c.name()),
                    opt(r.topic_median_toxicity),
                    opt(r.gap12),
                    opt(r.gap23)
                );
            }
        }

        if !self.warnings.is_empty() {
            let _ = writeln!(s, "\n## Warnings\n");
            for w in &self.warnings {
                let _ = writeln!(s, "- {w}");
            }
        }
        s
    }
}

fn box_csv(rows: &[PlotRow], f: impl Fn(&PlotRow) -> Option<f64>) -> String {
    let mut by_group: BTreeMap<Group, Vec<f64>> = BTreeMap::new();
    for r in rows {
        if let Some(v) = f(r) {
            by_group.entry(r.group).or_default().push(v);
        }
    }
    let mut s = String::from("group,min,q1,median,q3,max\n");
    for (g, v) in by_group {
        if let Some(b) = five_number_summary(&v) {
            let _ = writeln!(s, "{g},{},{},{},{},{}", b[0], b[1], b[2], b[3], b[4]);
        }
    }
    s
}

fn cdf_by_group(rows: &[PlotRow], column: &str, f: impl Fn(&PlotRow) -> Option<f64>) -> String {
    let mut v: Vec<(Group, f64)> = rows.iter().filter_map(|r| f(r).map(|x| (r.group, x))).collect();
    v.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut s = format!("group,{column}\n");
    for (g, x) in v {
        let _ = writeln!(s, "{g},{x}");
    }
    s
}

/// One CSV per plot, keyed by file name.
pub fn export_plot_data(data: &PlotData) -> BTreeMap<String, String> {
    let rows = &data.rows;
    let mut out = BTreeMap::new();
    let mut entropy: Vec<(Group, f64)> = rows.iter().map(|r| (r.group, r.entropy)).collect();
    entropy.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    out.insert("entropy_cdf.csv".into(), cdf_csv(&entropy));
    out.insert("toxicity_median_box.csv".into(), box_csv(rows, |r| r.toxicity_median));
    out.insert("toxicity_gini_box.csv".into(), box_csv(rows, |r| r.toxicity_gini));
    out.insert("tweets_cdf.csv".into(), cdf_by_group(rows, "tweets", |r| Some(r.n_tweets as f64)));
    out.insert("unique_tweets_cdf.csv".into(), cdf_by_group(rows, "unique_tweets", |r| Some(r.n_unique as f64)));
    out.insert("hashtags_total_cdf.csv".into(), cdf_by_group(rows, "hashtags", |r| Some(r.hashtags_total as f64)));
    out.insert("hashtags_unique_cdf.csv".into(), cdf_by_group(rows, "unique_hashtags", |r| Some(r.hashtags_unique as f64)));
    out.insert("hashtag_ratio_cdf.csv".into(), cdf_by_group(rows, "hashtags_per_tweet", |r| Some(r.hashtags_per_tweet)));
    out.insert("burstiness_cdf.csv".into(), cdf_by_group(rows, "burstiness", |r| r.burstiness));

    let mut hist: BTreeMap<(Group, usize), usize> = BTreeMap::new();
    for r in rows {
        if let Some(b) = r.burstiness {
            let bin = (((b + 1.0) * 10.0).floor() as usize).min(19);
            *hist.entry((r.group, bin)).or_default() += 1;
        }
    }
    let mut s = String::from("group,bin_lo,bin_hi,count\n");
    for ((g, bin), c) in hist {
        let lo = -1.0 + bin as f64 * 0.1;
        let _ = writeln!(s, "{g},{lo:.1},{:.1},{c}", lo + 0.1);
    }
    out.insert("burstiness_hist.csv".into(), s);

    let mut delta: BTreeMap<(Group, i64), usize> = BTreeMap::new();
    for r in rows {
        for (d, c) in &r.delta_days_hist {
            *delta.entry((r.group, *d)).or_default() += c;
        }
    }
    let mut s = String::from("group,delta_days,count\n");
    for ((g, d), c) in delta {
        let _ = writeln!(s, "{g},{d},{c}");
    }
    out.insert("delta_days_hist.csv".into(), s);

    let mut years: BTreeMap<Group, BTreeMap<i32, usize>> = BTreeMap::new();
    for r in rows {
        if let Some(y) = r.creation_year {
            *years.entry(r.group).or_default().entry(y).or_default() += 1;
        }
    }
    let mut s = String::from("group,year,count,percentage\n");
    for (g, ys) in years {
        let n: usize = ys.values().sum();
        for (y, c) in ys {
            let _ = writeln!(s, "{g},{y},{c},{}", 100.0 * c as f64 / n as f64);
        }
    }
    out.insert("creation_year.csv".into(), s);

    let mut gaps: Vec<(bool, f64, f64)> = rows
        .iter()
        .filter_map(|r| Some((r.on_mission?, r.gap?.0, r.gap?.1)))
        .collect();
    gaps.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.total_cmp(&b.1)).then(a.2.total_cmp(&b.2)));
    let mut s = String::from("designation,gap12,gap23\n");
    for (on, g12, g23) in gaps {
        let label = if on { "on_mission" } else { "not_on_mission" };
        let _ = writeln!(s, "{label},{g12},{g23}");
    }
    out.insert("top3_gap_cdf.csv".into(), s);
    out
}

// ---------------------------------------------------------------- driver

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overwrite outputs produced under a different configuration.
    pub force: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: Report,
    pub config_hash: String,
    pub recomputed: Vec<String>,
    pub reused: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    config_hash: String,
    files: BTreeMap<String, String>,
}

fn check_provenance(out: &Path, config_hash: &str, force: bool) -> Result<()> {
    let path = out.join(MANIFEST_FILE);
    let Ok(bytes) = fs::read(&path) else { return Ok(()) };
    let found = serde_json::from_slice::<Manifest>(&bytes)
        .map(|m| m.config_hash)
        .unwrap_or_else(|_| "<unreadable>".into());
    if found != config_hash && !force {
        return Err(Error::ProvenanceMismatch {
            path,
            expected: config_hash.into(),
            found,
        });
    }
    Ok(())
}

/// Runs every stage, reusing cached stage outputs whose inputs are unchanged,
/// and writes the report, model, designations and plot CSVs under `out`.
pub fn run_pipeline(cfg: &RunConfig, out: &Path, opts: &RunOptions) -> Result<RunOutcome> {
    cfg.validate()?;
    let config_hash = cfg.hash();
    let _lock = DirLock::acquire(out)?;
    check_provenance(out, &config_hash, opts.force)?;
    let mut cache = StageCache::new(out.join("cache"))?;

    let ingest_key = KeyBuilder::new("ingest")
        .file(cfg.inputs.tweets.as_deref())
        .and_then(|k| k.file(cfg.inputs.profiles.as_deref()))
        .map_err(|e| e.in_stage("ingest"))?
        .json(&cfg.ingest)
        .finish();
    let corpus: Corpus = cache.run("ingest", &ingest_key, || stage_ingest(cfg))?;

    let score_key = KeyBuilder::new("score")
        .part(&ingest_key)
        .file(cfg.inputs.scores.as_deref())
        .map_err(|e| e.in_stage("score"))?
        .json(&cfg.scoring)
        .finish();
    let score: ScoreStage = cache.run("score", &score_key, || stage_score(cfg, &corpus))?;

    let topics_key = KeyBuilder::new("topics")
        .part(&ingest_key)
        .file(cfg.inputs.tpv.as_deref())
        .map_err(|e| e.in_stage("topics"))?
        .json(&(cfg.k, cfg.seed))
        .finish();
    let topics: TopicsStage = cache.run("topics", &topics_key, || stage_topics(cfg, &corpus))?;

    let catalog = catalog_for(cfg).map_err(|e| e.in_stage("group"))?;
    let group_key = KeyBuilder::new("group")
        .part(&topics_key)
        .part(catalog.to_text())
        .finish();
    let groups: GroupStage = cache.run("group", &group_key, || {
        stage_group(&corpus, &catalog, &assign_topics(&topics.tpvs))
    })?;

    let metrics_key = KeyBuilder::new("metrics").part(&ingest_key).part(&score_key).finish();
    let metrics: BTreeMap<String, MetricBundle> =
        cache.run("metrics", &metrics_key, || Ok(stage_metrics(&corpus, &score.cache)))?;

    let detect_key = KeyBuilder::new("detect")
        .part(&group_key)
        .part(&score_key)
        .json(&cfg.mission)
        .finish();
    let detect: DetectStage = cache.run("detect", &detect_key, || {
        stage_detect(cfg, &corpus, &catalog, &score.cache, &topics, &groups)
    })?;

    let classify_key = KeyBuilder::new("classify")
        .part(&detect_key)
        .part(&metrics_key)
        .file(cfg.inputs.labels.as_deref())
        .map_err(|e| e.in_stage("classify"))?
        .json(&(&cfg.classifier, cfg.seed, &config_hash))
        .finish();
    let classify: ClassifyStage = cache.run("classify", &classify_key, || {
        stage_classify(cfg, &config_hash, &corpus, &groups, &metrics, &detect)
    })?;

    let report_key = KeyBuilder::new("report").part(&classify_key).part(&config_hash).finish();
    let (report, plots): (Report, PlotData) = cache.run("report", &report_key, || {
        build_report(cfg, &config_hash, &corpus, &score, &topics, &groups, &metrics, &detect, &classify)
    })?;

    write_outputs(out, cfg, &config_hash, &report, &plots, &detect, &classify).map_err(|e| e.in_stage("report"))?;
    Ok(RunOutcome {
        report,
        config_hash,
        recomputed: cache.recomputed,
        reused: cache.reused,
    })
}

fn write_outputs(
    out: &Path,
    cfg: &RunConfig,
    config_hash: &str,
    report: &Report,
    plots: &PlotData,
    detect: &DetectStage,
    classify: &ClassifyStage,
) -> Result<()> {
    let mut files: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    files.insert("config.toml".into(), cfg.to_toml().into_bytes());
    files.insert("report.json".into(), report.to_json()?.into_bytes());
    files.insert("report.md".into(), report.to_markdown().into_bytes());
    if let Some(d) = &detect.detection {
        files.insert("designations.json".into(), (serde_json::to_string_pretty(d)? + "\n").into_bytes());
    }
    if let Some(m) = &classify.model {
        files.insert("model.json".into(), m.to_json()?.into_bytes());
    }
    files.insert("features.jsonl".into(), classifier::features_jsonl(&classify.features)?.into_bytes());
    if let Some(w) = &classify.wild {
        files.insert("predictions.jsonl".into(), w.predictions_jsonl()?.into_bytes());
    }
    for (name, body) in export_plot_data(plots) {
        files.insert(format!("plots/{name}"), body.into_bytes());
    }
    fs::create_dir_all(out.join("plots")).map_err(|e| Error::io(out.join("plots"), e))?;
    let mut digests = BTreeMap::new();
    for (name, body) in &files {
        write_atomic(&out.join(name), body)?;
        digests.insert(name.clone(), hex::encode(Sha256::digest(body)));
    }
    let manifest = Manifest {
        format: REPORT_FORMAT.into(),
        config_hash: config_hash.into(),
        files: digests,
    };
    write_atomic(&out.join(MANIFEST_FILE), (serde_json::to_string_pretty(&manifest)? + "\n").as_bytes())
}

/// Reads a report written by [`run_pipeline`], refusing one produced under a
/// different configuration when `expected_hash` is given.
pub fn load_report(out: &Path, expected_hash: Option<&str>) -> Result<Report> {
    let path = out.join("report.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let report: Report = serde_json::from_str(&text)?;
    if let Some(h) = expected_hash {
        if report.config_hash != h {
            return Err(Error::ProvenanceMismatch {
                path,
                expected: h.into(),
                found: report.config_hash,
            });
        }
    }
    Ok(report)
}
