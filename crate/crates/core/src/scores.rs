//! External per-tweet toxicity and per-profile bot scores.
//!
//! Scores come from a [`ToxicityBackend`] / [`BotBackend`] (mock, file, or
//! HTTP) and land in a [`ScoreCache`] that is persisted as versioned JSONL.
//! Missing scores stay absent; nothing downstream imputes them as zero.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::stats::mean_std;

pub const CACHE_SCHEMA: &str = "mission-profiler/score-cache";
pub const CACHE_VERSION: u32 = 1;

pub const ENV_TOXICITY_URL: &str = "MISSION_PROFILER_TOXICITY_URL";
pub const ENV_BOT_URL: &str = "MISSION_PROFILER_BOT_URL";
pub const ENV_TOKEN: &str = "MISSION_PROFILER_API_TOKEN";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Mock,
    File,
    Http,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToxicityScore {
    pub score: f64,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fetched_at: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BotScores {
    pub overall: f64,
    pub spammer: f64,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fetched_at: Option<i64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreCache {
    pub toxicity: BTreeMap<String, ToxicityScore>,
    pub bots: BTreeMap<String, BotScores>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    schema: String,
    version: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum CacheLine {
    Toxicity {
        id: String,
        #[serde(flatten)]
        score: ToxicityScore,
    },
    Bot {
        id: String,
        #[serde(flatten)]
        scores: BotScores,
    },
}

fn in_unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

impl ScoreCache {
    pub fn toxicity_of(&self, tweet_id: &str) -> Option<f64> {
        self.toxicity.get(tweet_id).map(|s| s.score)
    }

    pub fn insert_toxicity(&mut self, id: impl Into<String>, score: f64, source: Source) -> Result<()> {
        if !in_unit(score) {
            return Err(Error::InvalidArgument(format!("toxicity {score} outside [0,1]")));
        }
        self.toxicity.insert(
            id.into(),
            ToxicityScore {
                score,
                source,
                fetched_at: None,
            },
        );
        Ok(())
    }

    pub fn insert_bot(&mut self, id: impl Into<String>, overall: f64, spammer: f64, source: Source) -> Result<()> {
        if !in_unit(overall) || !in_unit(spammer) {
            return Err(Error::InvalidArgument(format!(
                "bot scores ({overall}, {spammer}) outside [0,1]"
            )));
        }
        self.bots.insert(
            id.into(),
            BotScores {
                overall,
                spammer,
                source,
                fetched_at: None,
            },
        );
        Ok(())
    }

    /// Merge `other` into `self`; existing entries win.
    pub fn merge(&mut self, other: ScoreCache) {
        for (k, v) in other.toxicity {
            self.toxicity.entry(k).or_insert(v);
        }
        for (k, v) in other.bots {
            self.bots.entry(k).or_insert(v);
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&Header {
            schema: CACHE_SCHEMA.into(),
            version: CACHE_VERSION,
        })
        .expect("header serializes");
        out.push('\n');
        for (id, score) in &self.toxicity {
            let line = CacheLine::Toxicity {
                id: id.clone(),
                score: *score,
            };
            out.push_str(&serde_json::to_string(&line).expect("cache line serializes"));
            out.push('\n');
        }
        for (id, scores) in &self.bots {
            let line = CacheLine::Bot {
                id: id.clone(),
                scores: *scores,
            };
            out.push_str(&serde_json::to_string(&line).expect("cache line serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines().enumerate();
        let schema_err = |line: usize, message: String| Error::Schema {
            path: path.to_path_buf(),
            line,
            message,
        };
        let header: Header = match lines.next() {
            None => return Ok(Self::default()),
            Some((_, l)) => serde_json::from_str(&l.map_err(|e| Error::io(path, e))?)
                .map_err(|e| schema_err(1, format!("bad cache header: {e}")))?,
        };
        if header.schema != CACHE_SCHEMA || header.version != CACHE_VERSION {
            return Err(schema_err(
                1,
                format!("unsupported cache {} v{}", header.schema, header.version),
            ));
        }
        let mut cache = Self::default();
        for (i, line) in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: CacheLine =
                serde_json::from_str(&line).map_err(|e| schema_err(i + 1, e.to_string()))?;
            match parsed {
                CacheLine::Toxicity { id, score } if in_unit(score.score) => {
                    cache.toxicity.insert(id, score);
                }
                CacheLine::Bot { id, scores } if in_unit(scores.overall) && in_unit(scores.spammer) => {
                    cache.bots.insert(id, scores);
                }
                _ => return Err(schema_err(i + 1, "score outside [0,1]".into())),
            }
        }
        Ok(cache)
    }
}

/// Loads externally computed scores from CSV (`id,score` or
/// `id,overall,spammer`) or JSONL (`{"tweet_id","score"}` /
/// `{"profile_id","overall","spammer"}`, or a saved cache). Any invalid row
/// fails the whole load, and the error lists every rejected row.
pub fn load_precomputed_scores(path: &Path) -> Result<ScoreCache> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    if first.contains(CACHE_SCHEMA) {
        return ScoreCache::load(path);
    }
    let mut cache = ScoreCache::default();
    let mut rejected = Vec::new();
    let source = Source::File;
    for (idx, line) in text.lines().enumerate() {
        let row = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let outcome = if line.starts_with('{') {
            parse_json_row(line, source, &mut cache)
        } else {
            parse_csv_row(line, row, source, &mut cache)
        };
        if let Err(msg) = outcome {
            rejected.push((row, msg));
        }
    }
    if rejected.is_empty() {
        Ok(cache)
    } else {
        Err(Error::RejectedRows { rows: rejected })
    }
}

fn parse_unit(field: &str) -> std::result::Result<f64, String> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| format!("`{}` is not a number", field.trim()))?;
    if in_unit(v) {
        Ok(v)
    } else {
        Err(format!("score {v} outside [0,1]"))
    }
}

fn parse_csv_row(
    line: &str,
    row: usize,
    source: Source,
    cache: &mut ScoreCache,
) -> std::result::Result<(), String> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    // A leading header row is tolerated.
    if row == 1 && fields.len() >= 2 && fields[1].parse::<f64>().is_err() {
        return Ok(());
    }
    match fields.as_slice() {
        [id, score] if !id.is_empty() => {
            let s = parse_unit(score)?;
            cache.insert_toxicity(*id, s, source).map_err(|e| e.to_string())
        }
        [id, overall, spammer] if !id.is_empty() => {
            let (o, s) = (parse_unit(overall)?, parse_unit(spammer)?);
            cache.insert_bot(*id, o, s, source).map_err(|e| e.to_string())
        }
        _ => Err(format!("expected 2 or 3 columns, found {}", fields.len())),
    }
}

fn parse_json_row(line: &str, source: Source, cache: &mut ScoreCache) -> std::result::Result<(), String> {
    let v: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let num = |key: &str| -> std::result::Result<f64, String> {
        let x = v
            .get(key)
            .and_then(serde_json::Value::as_f64)
            .ok_or_else(|| format!("missing numeric `{key}`"))?;
        if in_unit(x) {
            Ok(x)
        } else {
            Err(format!("{key} {x} outside [0,1]"))
        }
    };
    let id = |key: &str| v.get(key).and_then(|x| match x {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        _ => None,
    });
    if let Some(tid) = id("tweet_id") {
        cache.insert_toxicity(tid, num("score")?, source).map_err(|e| e.to_string())
    } else if let Some(pid) = id("profile_id") {
        cache
            .insert_bot(pid, num("overall")?, num("spammer")?, source)
            .map_err(|e| e.to_string())
    } else {
        Err("row has neither tweet_id nor profile_id".into())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackendError {
    /// Worth retrying.
    Transient(String),
    QuotaExceeded,
    Unavailable(String),
    /// The backend has no score for this item; not retried.
    NotFound(String),
}

pub trait ToxicityBackend: Sync {
    fn source(&self) -> Source;
    fn score_text(&self, tweet_id: &str, text: &str) -> std::result::Result<f64, BackendError>;
}

pub trait BotBackend: Sync {
    fn source(&self) -> Source;
    fn score_profile(&self, profile_id: &str) -> std::result::Result<(f64, f64), BackendError>;
}

/// Constant-score backend, optionally failing on chosen ids.
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    pub toxicity: f64,
    pub overall: f64,
    pub spammer: f64,
    pub always_fail: BTreeSet<String>,
    calls: std::sync::Arc<std::sync::atomic::AtomicUsize>,
}

impl MockBackend {
    pub fn constant(toxicity: f64) -> Self {
        Self {
            toxicity,
            overall: toxicity,
            spammer: toxicity,
            ..Self::default()
        }
    }

    pub fn failing_on(mut self, ids: impl IntoIterator<Item = String>) -> Self {
        self.always_fail.extend(ids);
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(std::sync::atomic::Ordering::SeqCst)
    }

    fn hit(&self, id: &str) -> std::result::Result<(), BackendError> {
        self.calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        if self.always_fail.contains(id) {
            Err(BackendError::Transient(format!("injected failure for {id}")))
        } else {
            Ok(())
        }
    }
}

impl ToxicityBackend for MockBackend {
    fn source(&self) -> Source {
        Source::Mock
    }

    fn score_text(&self, tweet_id: &str, _text: &str) -> std::result::Result<f64, BackendError> {
        self.hit(tweet_id).map(|_| self.toxicity)
    }
}

impl BotBackend for MockBackend {
    fn source(&self) -> Source {
        Source::Mock
    }

    fn score_profile(&self, profile_id: &str) -> std::result::Result<(f64, f64), BackendError> {
        self.hit(profile_id).map(|_| (self.overall, self.spammer))
    }
}

/// Serves scores from a precomputed file; ids absent from it are unavailable.
#[derive(Debug, Clone)]
pub struct FileBackend {
    cache: ScoreCache,
}

impl FileBackend {
    pub fn open(path: &Path) -> Result<Self> {
        Ok(Self {
            cache: load_precomputed_scores(path)?,
        })
    }

    pub fn from_cache(cache: ScoreCache) -> Self {
        Self { cache }
    }
}

impl ToxicityBackend for FileBackend {
    fn source(&self) -> Source {
        Source::File
    }

    fn score_text(&self, tweet_id: &str, _text: &str) -> std::result::Result<f64, BackendError> {
        self.cache
            .toxicity_of(tweet_id)
            .ok_or_else(|| BackendError::NotFound(format!("{tweet_id} not in score file")))
    }
}

impl BotBackend for FileBackend {
    fn source(&self) -> Source {
        Source::File
    }

    fn score_profile(&self, profile_id: &str) -> std::result::Result<(f64, f64), BackendError> {
        self.cache
            .bots
            .get(profile_id)
            .map(|b| (b.overall, b.spammer))
            .ok_or_else(|| BackendError::NotFound(format!("{profile_id} not in score file")))
    }
}

/// POSTs one item per request; the endpoint answers with a bare number or a
/// JSON object carrying `score` (toxicity) or `overall`/`spammer` (bots).
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    toxicity_url: Option<String>,
    bot_url: Option<String>,
    token: Option<String>,
}

impl HttpBackend {
    pub fn from_env() -> Result<Self> {
        let toxicity_url = std::env::var(ENV_TOXICITY_URL).ok();
        let bot_url = std::env::var(ENV_BOT_URL).ok();
        if toxicity_url.is_none() && bot_url.is_none() {
            return Err(Error::InvalidArgument(format!(
                "set {ENV_TOXICITY_URL} and/or {ENV_BOT_URL} for the http backend"
            )));
        }
        Self::new(toxicity_url, bot_url, std::env::var(ENV_TOKEN).ok())
    }

    pub fn new(toxicity_url: Option<String>, bot_url: Option<String>, token: Option<String>) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| Error::BackendUnavailable(e.to_string()))?;
        Ok(Self {
            client,
            toxicity_url,
            bot_url,
            token,
        })
    }

    fn post(&self, url: &Option<String>, body: serde_json::Value) -> std::result::Result<serde_json::Value, BackendError> {
        let url = url
            .as_deref()
            .ok_or_else(|| BackendError::Unavailable("endpoint not configured".into()))?;
        let mut req = self
            .client
            .post(url)
            .header("content-type", "application/json")
            .body(body.to_string());
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().map_err(|e| BackendError::Transient(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 429 {
            return Err(BackendError::QuotaExceeded);
        }
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(BackendError::Unavailable(format!("HTTP {status}")));
        }
        if status.as_u16() == 404 {
            return Err(BackendError::NotFound(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(BackendError::Transient(format!("HTTP {status}")));
        }
        let text = resp.text().map_err(|e| BackendError::Transient(e.to_string()))?;
        serde_json::from_str(text.trim()).map_err(|e| BackendError::Transient(format!("bad response: {e}")))
    }
}

fn unit_field(v: &serde_json::Value, key: &str) -> std::result::Result<f64, BackendError> {
    v.as_f64()
        .filter(|_| key == "score")
        .or_else(|| v.get(key).and_then(serde_json::Value::as_f64))
        .filter(|x| in_unit(*x))
        .ok_or_else(|| BackendError::Transient(format!("response lacks `{key}` in [0,1]")))
}

impl ToxicityBackend for HttpBackend {
    fn source(&self) -> Source {
        Source::Http
    }

    fn score_text(&self, _tweet_id: &str, text: &str) -> std::result::Result<f64, BackendError> {
        let v = self.post(&self.toxicity_url, serde_json::json!({ "text": text }))?;
        unit_field(&v, "score")
    }
}

impl BotBackend for HttpBackend {
    fn source(&self) -> Source {
        Source::Http
    }

    fn score_profile(&self, profile_id: &str) -> std::result::Result<(f64, f64), BackendError> {
        let v = self.post(&self.bot_url, serde_json::json!({ "profile_id": profile_id }))?;
        Ok((unit_field(&v, "overall")?, unit_field(&v, "spammer")?))
    }
}

#[derive(Debug, Clone)]
pub struct ScoringOptions {
    /// Requests per second; `0` disables throttling.
    pub rate_limit: f64,
    pub max_retries: u32,
    pub base_backoff: Duration,
    pub max_backoff: Duration,
    pub workers: usize,
    /// Stamped on freshly fetched entries.
    pub fetched_at: Option<i64>,
}

impl Default for ScoringOptions {
    fn default() -> Self {
        Self {
            rate_limit: 0.0,
            max_retries: 3,
            base_backoff: Duration::from_millis(200),
            max_backoff: Duration::from_secs(10),
            workers: 1,
            fetched_at: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScoringReport {
    pub fetched: usize,
    pub cached: usize,
    pub missing: Vec<String>,
    pub backend_calls: usize,
}

struct RateLimiter {
    interval: Option<Duration>,
    next: Mutex<Instant>,
}

impl RateLimiter {
    fn new(rps: f64) -> Self {
        let interval = (rps > 0.0).then(|| Duration::from_secs_f64(1.0 / rps));
        Self {
            interval,
            next: Mutex::new(Instant::now()),
        }
    }

    fn acquire(&self) {
        let Some(step) = self.interval else { return };
        let wait = {
            let mut next = self.next.lock().expect("rate limiter poisoned");
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + step;
            slot - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

enum Outcome<T> {
    Scored(T, usize),
    Missing(usize),
    Fatal(BackendError, usize),
}

fn with_retries<T>(
    opts: &ScoringOptions,
    limiter: &RateLimiter,
    mut call: impl FnMut() -> std::result::Result<T, BackendError>,
) -> Outcome<T> {
    let mut delay = opts.base_backoff;
    let mut calls = 0;
    for attempt in 0..=opts.max_retries {
        limiter.acquire();
        calls += 1;
        match call() {
            Ok(v) => return Outcome::Scored(v, calls),
            Err(BackendError::Transient(msg)) => {
                debug!("attempt {} failed: {msg}", attempt + 1);
                if attempt < opts.max_retries && !delay.is_zero() {
                    std::thread::sleep(delay);
                }
                delay = (delay * 2).min(opts.max_backoff);
            }
            Err(BackendError::NotFound(msg)) => {
                debug!("{msg}");
                return Outcome::Missing(calls);
            }
            Err(fatal) => return Outcome::Fatal(fatal, calls),
        }
    }
    Outcome::Missing(calls)
}

/// Runs `fetch` over `pending` with up to `opts.workers` threads, returning
/// outcomes in input order.
fn fetch_all<T: Send>(
    pending: &[(String, String)],
    opts: &ScoringOptions,
    fetch: impl Fn(&str, &str) -> std::result::Result<T, BackendError> + Sync,
) -> Vec<Outcome<T>> {
    let limiter = RateLimiter::new(opts.rate_limit);
    let workers = opts.workers.max(1).min(pending.len().max(1));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let stop = std::sync::atomic::AtomicBool::new(false);
    let slots: Vec<Mutex<Option<Outcome<T>>>> = pending.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                if stop.load(std::sync::atomic::Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                let Some((id, text)) = pending.get(i) else { break };
                let out = with_retries(opts, &limiter, || fetch(id, text));
                if matches!(out, Outcome::Fatal(..)) {
                    stop.store(true, std::sync::atomic::Ordering::SeqCst);
                }
                *slots[i].lock().expect("slot poisoned") = Some(out);
            });
        }
    });
    slots
        .into_iter()
        .map_while(|m| m.into_inner().expect("slot poisoned"))
        .collect()
}

fn fatal_error(e: BackendError, scored: usize) -> Error {
    match e {
        BackendError::QuotaExceeded => Error::QuotaExceeded { scored },
        BackendError::Unavailable(m) | BackendError::Transient(m) | BackendError::NotFound(m) => {
            Error::BackendUnavailable(m)
        }
    }
}

/// Scores every distinct tweet id in the corpus that the cache does not
/// already hold. On a fatal backend error the cache keeps everything fetched
/// so far and the error is returned, so the run can resume.
pub fn score_toxicity(
    corpus: &Corpus,
    backend: &dyn ToxicityBackend,
    cache: &mut ScoreCache,
    opts: &ScoringOptions,
) -> Result<ScoringReport> {
    let mut report = ScoringReport::default();
    let mut pending = Vec::new();
    let mut seen = BTreeSet::new();
    for t in corpus.tweets() {
        if !seen.insert(t.tweet_id.as_str()) {
            continue;
        }
        if cache.toxicity.contains_key(&t.tweet_id) {
            report.cached += 1;
        } else {
            pending.push((t.tweet_id.clone(), t.text_raw.clone()));
        }
    }
    let outcomes = fetch_all(&pending, opts, |id, text| backend.score_text(id, text));
    let source = backend.source();
    for ((id, _), outcome) in pending.iter().zip(outcomes) {
        match outcome {
            Outcome::Scored(score, calls) => {
                report.backend_calls += calls;
                if !in_unit(score) {
                    warn!("backend returned {score} for {id}; marking missing");
                    report.missing.push(id.clone());
                    continue;
                }
                cache.toxicity.insert(
                    id.clone(),
                    ToxicityScore {
                        score,
                        source,
                        fetched_at: opts.fetched_at,
                    },
                );
                report.fetched += 1;
            }
            Outcome::Missing(calls) => {
                report.backend_calls += calls;
                report.missing.push(id.clone());
            }
            Outcome::Fatal(e, calls) => {
                report.backend_calls += calls;
                return Err(fatal_error(e, report.fetched));
            }
        }
    }
    Ok(report)
}

/// Bot/spammer scores for every profile not already cached.
pub fn score_bots(
    corpus: &Corpus,
    backend: &dyn BotBackend,
    cache: &mut ScoreCache,
    opts: &ScoringOptions,
) -> Result<ScoringReport> {
    let mut report = ScoringReport::default();
    let mut pending = Vec::new();
    for pid in corpus.profiles.keys() {
        if cache.bots.contains_key(pid) {
            report.cached += 1;
        } else {
            pending.push((pid.clone(), String::new()));
        }
    }
    let outcomes = fetch_all(&pending, opts, |id, _| backend.score_profile(id));
    let source = backend.source();
    for ((id, _), outcome) in pending.iter().zip(outcomes) {
        match outcome {
            Outcome::Scored((overall, spammer), calls) => {
                report.backend_calls += calls;
                if !in_unit(overall) || !in_unit(spammer) {
                    report.missing.push(id.clone());
                    continue;
                }
                cache.bots.insert(
                    id.clone(),
                    BotScores {
                        overall,
                        spammer,
                        source,
                        fetched_at: opts.fetched_at,
                    },
                );
                report.fetched += 1;
            }
            Outcome::Missing(calls) => {
                report.backend_calls += calls;
                report.missing.push(id.clone());
            }
            Outcome::Fatal(e, calls) => {
                report.backend_calls += calls;
                return Err(fatal_error(e, report.fetched));
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BotSummary {
    pub overall: Option<MeanStd>,
    pub spammer: Option<MeanStd>,
    pub n_present: usize,
    pub n_missing: usize,
}

/// Mean and population standard deviation of bot scores over a profile group.
pub fn bot_score_summary<'a>(
    group: impl IntoIterator<Item = &'a str>,
    cache: &ScoreCache,
) -> Result<BotSummary> {
    let mut overall = Vec::new();
    let mut spammer = Vec::new();
    let mut n_missing = 0;
    let mut n = 0;
    for pid in group {
        n += 1;
        match cache.bots.get(pid) {
            Some(b) => {
                overall.push(b.overall);
                spammer.push(b.spammer);
            }
            None => n_missing += 1,
        }
    }
    if n == 0 {
        return Err(Error::EmptyInput("bot score group"));
    }
    let to = |v: &[f64]| mean_std(v).map(|(mean, std)| MeanStd { mean, std });
    Ok(BotSummary {
        overall: to(&overall),
        spammer: to(&spammer),
        n_present: overall.len(),
        n_missing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_util::{timeline, tweet};
    use rand::{Rng, SeedableRng};

    fn corpus(n: usize) -> Corpus {
        let mut c = Corpus::default();
        let tl = timeline((0..n).map(|i| tweet(&format!("t{i}"), "x", i as i64 + 1, false)).collect());
        c.profiles.insert("p".into(), tl);
        c
    }

    fn fast() -> ScoringOptions {
        ScoringOptions {
            base_backoff: Duration::ZERO,
            ..ScoringOptions::default()
        }
    }

    #[test]
    fn mock_scores_everything() {
        let c = corpus(20);
        let mut cache = ScoreCache::default();
        let r = score_toxicity(&c, &MockBackend::constant(0.5), &mut cache, &fast()).unwrap();
        assert_eq!(r.fetched, 20);
        assert!(cache.toxicity.values().all(|s| s.score == 0.5));
    }

    #[test]
    fn warm_cache_skips_backend() {
        let c = corpus(20);
        let mut cache = ScoreCache::default();
        score_toxicity(&c, &MockBackend::constant(0.5), &mut cache, &fast()).unwrap();
        let backend = MockBackend::constant(0.9);
        let r = score_toxicity(&c, &backend, &mut cache, &fast()).unwrap();
        assert_eq!(backend.calls(), 0);
        assert_eq!(r.cached, 20);
        assert_eq!(cache.toxicity_of("t3"), Some(0.5));
    }

    #[test]
    fn exhausted_retries_mark_missing() {
        let c = corpus(100);
        let backend = MockBackend::constant(0.2).failing_on(["t17".to_string()]);
        let mut cache = ScoreCache::default();
        let opts = ScoringOptions {
            workers: 4,
            ..fast()
        };
        let r = score_toxicity(&c, &backend, &mut cache, &opts).unwrap();
        assert_eq!(r.fetched, 99);
        assert_eq!(r.missing, vec!["t17".to_string()]);
        assert_eq!(backend.calls(), 99 + 1 + opts.max_retries as usize);
        assert_eq!(r.fetched + r.cached + r.missing.len(), 100);
    }

    struct Quota(std::sync::atomic::AtomicUsize);
    impl ToxicityBackend for Quota {
        fn source(&self) -> Source {
            Source::Mock
        }
        fn score_text(&self, _: &str, _: &str) -> std::result::Result<f64, BackendError> {
            if self.0.fetch_add(1, std::sync::atomic::Ordering::SeqCst) >= 5 {
                Err(BackendError::QuotaExceeded)
            } else {
                Ok(0.1)
            }
        }
    }

    #[test]
    fn quota_exceeded_keeps_partial_cache() {
        let c = corpus(10);
        let mut cache = ScoreCache::default();
        let err = score_toxicity(&c, &Quota(0.into()), &mut cache, &fast()).unwrap_err();
        assert!(matches!(err, Error::QuotaExceeded { scored: 5 }));
        assert_eq!(cache.toxicity.len(), 5);
        // resume with a healthy backend
        let r = score_toxicity(&c, &MockBackend::constant(0.3), &mut cache, &fast()).unwrap();
        assert_eq!((r.cached, r.fetched), (5, 5));
    }

    #[test]
    fn rate_limit_spaces_requests() {
        let c = corpus(5);
        let mut cache = ScoreCache::default();
        let opts = ScoringOptions {
            rate_limit: 100.0,
            ..fast()
        };
        let start = Instant::now();
        score_toxicity(&c, &MockBackend::constant(0.3), &mut cache, &opts).unwrap();
        assert!(start.elapsed() >= Duration::from_millis(35));
    }

    #[test]
    fn precomputed_csv_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(&p, "tweet_id,score\nt1,0.9\n").unwrap();
        assert_eq!(load_precomputed_scores(&p).unwrap().toxicity_of("t1"), Some(0.9));

        std::fs::write(&p, "t1,0.9\nt2,1.3\nt3,abc\n").unwrap();
        match load_precomputed_scores(&p) {
            Err(Error::RejectedRows { rows }) => {
                assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), vec![2, 3]);
            }
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn precomputed_jsonl_and_bots() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.jsonl");
        std::fs::write(
            &p,
            "{\"tweet_id\":\"t1\",\"score\":0.25}\n{\"profile_id\":\"p\",\"overall\":0.2,\"spammer\":0.4}\n",
        )
        .unwrap();
        let c = load_precomputed_scores(&p).unwrap();
        assert_eq!(c.toxicity_of("t1"), Some(0.25));
        assert_eq!(c.bots["p"].spammer, 0.4);
    }

    #[test]
    fn cache_round_trip_is_byte_stable() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut cache = ScoreCache::default();
        for i in 0..10_000 {
            cache.insert_toxicity(format!("t{i}"), rng.random::<f64>(), Source::File).unwrap();
        }
        cache.insert_bot("p", 0.1, 0.7, Source::Http).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.jsonl");
        let b = dir.path().join("b.jsonl");
        cache.save(&a).unwrap();
        let loaded = load_precomputed_scores(&a).unwrap();
        assert!(loaded == cache, "cache changed across save/load");
        loaded.save(&b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn bot_summary_population_std() {
        let mut cache = ScoreCache::default();
        cache.insert_bot("a", 0.2, 0.2, Source::Mock).unwrap();
        cache.insert_bot("b", 0.4, 0.4, Source::Mock).unwrap();
        let s = bot_score_summary(["a", "b", "zz"], &cache).unwrap();
        let o = s.overall.unwrap();
        assert!((o.mean - 0.3).abs() < 1e-12 && (o.std - 0.1).abs() < 1e-12);
        assert_eq!(s.n_missing, 1);

        let s = bot_score_summary(["a"], &cache).unwrap();
        assert_eq!(s.overall.unwrap(), MeanStd { mean: 0.2, std: 0.0 });
        assert!(bot_score_summary(std::iter::empty(), &cache).is_err());
    }

    #[test]
    fn bot_summary_uniform_mean() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut cache = ScoreCache::default();
        let ids: Vec<String> = (0..1000).map(|i| format!("p{i}")).collect();
        for id in &ids {
            cache.insert_bot(id.clone(), rng.random(), rng.random(), Source::Mock).unwrap();
        }
        let s = bot_score_summary(ids.iter().map(String::as_str), &cache).unwrap();
        // 3 sigma of the mean of 1000 U(0,1) draws is 3 * 0.2887 / sqrt(1000) ~ 0.027
        assert!((s.overall.unwrap().mean - 0.5).abs() < 0.03);
    }
}
