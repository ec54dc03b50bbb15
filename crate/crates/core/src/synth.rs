//! Seeded synthetic corpora with planted on-mission and genuine archetypes.
//!
//! Every profile draws from its own derived RNG stream, so bundles are
//! byte-identical for a given `(specs, k, seed)`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution, Exp, Gamma};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::scores::{ScoreCache, Source};
use crate::seed;
use crate::topics::TopicCatalog;

pub const DEFAULT_K: usize = 20;
pub const MIN_K: usize = 8;
const EPOCH_START: i64 = 1_640_995_200;
const DAY: i64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BurstPattern {
    Periodic,
    Poisson,
    Bursty,
}

/// A `[0,1]` distribution given by mean and standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitDist {
    pub mean: f64,
    pub spread: f64,
}

impl UnitDist {
    pub const fn new(mean: f64, spread: f64) -> Self {
        UnitDist { mean, spread }
    }

    fn validate(&self, what: &str) -> Result<()> {
        let ok = self.mean > 0.0
            && self.mean < 1.0
            && self.spread > 0.0
            && self.spread * self.spread < self.mean * (1.0 - self.mean);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "{what}: need 0 < mean < 1 and spread² < mean·(1−mean), got ({}, {})",
                self.mean, self.spread
            )))
        }
    }

    fn beta(&self) -> Beta<f64> {
        let m = self.mean;
        let phi = m * (1.0 - m) / (self.spread * self.spread) - 1.0;
        Beta::new(m * phi, (1.0 - m) * phi).expect("validated")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchetypeSpec {
    pub name: String,
    pub n_profiles: usize,
    pub on_mission: bool,
    /// Dirichlet concentration added to a tweet's intended topic.
    pub topic_skew: f64,
    /// Dirichlet concentration shared by every topic.
    #[serde(default = "default_background_alpha")]
    pub background_alpha: f64,
    /// Fraction of tweets aimed at the archetype's focus topic.
    #[serde(default)]
    pub focus_share: f64,
    /// Focus topic; derived from the seed when absent.
    #[serde(default)]
    pub focus_topic: Option<usize>,
    pub focus_toxicity: UnitDist,
    pub background_toxicity: UnitDist,
    pub burst_pattern: BurstPattern,
    /// Inclusive range.
    pub tweets_per_profile: [usize; 2],
    pub hashtag_rate: f64,
    #[serde(default = "default_url_rate")]
    pub url_rate: f64,
    #[serde(default = "default_mention_rate")]
    pub mention_rate: f64,
    #[serde(default = "default_retweet_rate")]
    pub retweet_rate: f64,
    pub friend_density: f64,
    pub retweet_share_rate: f64,
    #[serde(default = "default_bot_score")]
    pub bot_score: UnitDist,
}

fn default_background_alpha() -> f64 {
    0.3
}
fn default_url_rate() -> f64 {
    0.1
}
fn default_mention_rate() -> f64 {
    0.2
}
fn default_retweet_rate() -> f64 {
    0.15
}
fn default_bot_score() -> UnitDist {
    UnitDist::new(0.3, 0.15)
}

impl ArchetypeSpec {
    pub fn on_mission(n_profiles: usize) -> Self {
        ArchetypeSpec {
            name: "mission".into(),
            n_profiles,
            on_mission: true,
            topic_skew: 12.0,
            background_alpha: default_background_alpha(),
            focus_share: 0.25,
            focus_topic: None,
            focus_toxicity: UnitDist::new(0.65, 0.12),
            background_toxicity: UnitDist::new(0.12, 0.06),
            burst_pattern: BurstPattern::Bursty,
            tweets_per_profile: [40, 120],
            hashtag_rate: 0.5,
            url_rate: default_url_rate(),
            mention_rate: default_mention_rate(),
            retweet_rate: 0.3,
            friend_density: 0.3,
            retweet_share_rate: 0.6,
            bot_score: UnitDist::new(0.45, 0.15),
        }
    }

    pub fn genuine(n_profiles: usize) -> Self {
        ArchetypeSpec {
            name: "genuine".into(),
            n_profiles,
            on_mission: false,
            topic_skew: 6.0,
            background_alpha: default_background_alpha(),
            focus_share: 0.0,
            focus_topic: None,
            focus_toxicity: UnitDist::new(0.1, 0.05),
            background_toxicity: UnitDist::new(0.1, 0.05),
            burst_pattern: BurstPattern::Poisson,
            tweets_per_profile: [40, 120],
            hashtag_rate: 0.15,
            url_rate: default_url_rate(),
            mention_rate: default_mention_rate(),
            retweet_rate: default_retweet_rate(),
            friend_density: 0.02,
            retweet_share_rate: 0.05,
            bot_score: UnitDist::new(0.2, 0.1),
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("archetype `{}`: {m}", self.name)));
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return bad("name must be non-empty ASCII alphanumeric or `_`".into());
        }
        if self.n_profiles == 0 {
            return bad("n_profiles must be ≥ 1".into());
        }
        if !(self.topic_skew >= 0.0 && self.topic_skew.is_finite()) {
            return bad("topic_skew must be finite and ≥ 0".into());
        }
        if !(self.background_alpha > 0.0 && self.background_alpha.is_finite()) {
            return bad("background_alpha must be finite and > 0".into());
        }
        let [lo, hi] = self.tweets_per_profile;
        if lo == 0 || lo > hi {
            return bad(format!("tweets_per_profile [{lo}, {hi}] must satisfy 1 ≤ min ≤ max"));
        }
        for (field, v) in [
            ("focus_share", self.focus_share),
            ("hashtag_rate", self.hashtag_rate),
            ("url_rate", self.url_rate),
            ("mention_rate", self.mention_rate),
            ("retweet_rate", self.retweet_rate),
            ("friend_density", self.friend_density),
            ("retweet_share_rate", self.retweet_share_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{field} = {v} outside [0,1]"));
            }
        }
        if let Some(t) = self.focus_topic {
            if t >= k {
                return bad(format!("focus_topic {t} ≥ K = {k}"));
            }
        }
        self.focus_toxicity.validate("focus_toxicity")?;
        self.background_toxicity.validate("background_toxicity")?;
        self.bot_score.validate("bot_score")
    }
}

/// Top-level synth config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(rename = "archetype")]
    pub archetypes: Vec<ArchetypeSpec>,
}

fn default_k() -> usize {
    DEFAULT_K
}

impl SynthSpec {
    pub fn balanced(n_on_mission: usize, n_genuine: usize) -> Self {
        SynthSpec {
            k: DEFAULT_K,
            archetypes: vec![ArchetypeSpec::on_mission(n_on_mission), ArchetypeSpec::genuine(n_genuine)],
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("synth spec: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }
}

/// In-memory synthetic bundle; `write` lays it out as files.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthBundle {
    pub k: usize,
    pub tweets_jsonl: String,
    pub profiles_jsonl: String,
    pub tpv_jsonl: String,
    pub scores: ScoreCache,
    /// profile id → on-mission.
    pub labels: BTreeMap<String, bool>,
    /// profile id → archetype name.
    pub archetypes: BTreeMap<String, String>,
    pub focus_topics: BTreeMap<String, usize>,
}

pub const TWEETS_FILE: &str = "tweets.jsonl";
pub const PROFILES_FILE: &str = "profiles.jsonl";
pub const TPV_FILE: &str = "tpv.jsonl";
pub const SCORES_FILE: &str = "scores.jsonl";
pub const LABELS_FILE: &str = "labels.csv";
pub const CATALOG_FILE: &str = "catalog.tsv";

impl SynthBundle {
    pub fn labels_csv(&self) -> String {
        let mut out = String::from("profile_id,label\n");
        for (id, &on) in &self.labels {
            let _ = writeln!(out, "{id},{}", if on { "on_mission" } else { "not_on_mission" });
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [
            (TWEETS_FILE, self.tweets_jsonl.clone()),
            (PROFILES_FILE, self.profiles_jsonl.clone()),
            (TPV_FILE, self.tpv_jsonl.clone()),
            (SCORES_FILE, self.scores.to_jsonl()),
            (LABELS_FILE, self.labels_csv()),
            (CATALOG_FILE, TopicCatalog::cyclic(self.k).to_text()),
        ];
        for (name, body) in files {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";
const FUNCTION_WORDS: &[&str] = &[
    "the", "and", "of", "to", "in", "is", "that", "for", "it", "with", "on", "this", "we", "they", "be",
];
const VOCAB_PER_TOPIC: u64 = 40;

/// Deterministic pseudo-word `j` of topic `t`.
fn topic_word(topic: usize, j: u64) -> String {
    let mut h = seed::derive_seed(0x5eed, "vocab", topic as u64 * VOCAB_PER_TOPIC + j);
    let syllables = 2 + (h % 2) as usize;
    h /= 2;
    let mut w = String::with_capacity(syllables * 2 + 1);
    for _ in 0..syllables {
        w.push(CONSONANTS[(h % CONSONANTS.len() as u64) as usize] as char);
        h /= CONSONANTS.len() as u64;
        w.push(VOWELS[(h % VOWELS.len() as u64) as usize] as char);
        h /= VOWELS.len() as u64;
    }
    w.push(CONSONANTS[(h % CONSONANTS.len() as u64) as usize] as char);
    w
}

fn dirichlet<R: Rng>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let mut v: Vec<f64> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("positive shape").sample(rng).max(1e-12))
        .collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

fn inter_event_gaps<R: Rng>(pattern: BurstPattern, n: usize, rng: &mut R) -> Vec<i64> {
    match pattern {
        BurstPattern::Periodic => {
            let step = rng.random_range(3_600..=DAY);
            vec![step; n.saturating_sub(1)]
        }
        BurstPattern::Poisson => {
            let exp: Exp<f64> = Exp::new(1.0 / (6.0 * 3_600.0)).expect("rate");
            (1..n).map(|_| exp.sample(rng).round().max(1.0) as i64).collect()
        }
        BurstPattern::Bursty => {
            let short: Exp<f64> = Exp::new(1.0 / 120.0).expect("rate");
            let long: Exp<f64> = Exp::new(1.0 / (3.0 * DAY as f64)).expect("rate");
            (1..n)
                .map(|_| {
                    let d = if rng.random_bool(0.85) { short.sample(rng) } else { long.sample(rng) };
                    d.round().max(1.0) as i64
                })
                .collect()
        }
    }
}

fn tweet_text<R: Rng>(topic: usize, k: usize, spec: &ArchetypeSpec, rng: &mut R) -> (String, Vec<String>) {
    let n_tokens = rng.random_range(10..=30);
    let mut words = Vec::with_capacity(n_tokens + 4);
    for i in 0..n_tokens {
        let u: f64 = rng.random();
        let w = if u < 0.6 {
            topic_word(topic, rng.random_range(0..VOCAB_PER_TOPIC))
        } else if u < 0.85 {
            (*FUNCTION_WORDS.choose(rng).expect("non-empty")).to_owned()
        } else {
            topic_word(rng.random_range(0..k), rng.random_range(0..VOCAB_PER_TOPIC))
        };
        words.push(w);
        if i + 1 < n_tokens && rng.random_bool(0.12) {
            let last = words.last_mut().expect("pushed");
            last.push('.');
        }
    }
    let mut text = words.join(" ");
    text.push('.');
    let mut tags = Vec::new();
    if rng.random_bool(spec.mention_rate) {
        let _ = write!(text, " @user{}", rng.random_range(0..500));
    }
    if rng.random_bool(spec.hashtag_rate) {
        let tag = topic_word(topic, rng.random_range(0..4));
        let _ = write!(text, " #{tag}");
        tags.push(tag);
    }
    if rng.random_bool(spec.url_rate) {
        let _ = write!(text, " https://example.org/{}", rng.random_range(0..100_000));
    }
    (text, tags)
}

struct Planned {
    id: String,
    archetype: usize,
    focus: usize,
}

/// Generates a bundle; `k ≥ 8`.
pub fn generate(specs: &[ArchetypeSpec], k: usize, seed: u64) -> Result<SynthBundle> {
    if specs.is_empty() {
        return Err(Error::InvalidArgument("synth: at least one archetype is required".into()));
    }
    if k < MIN_K {
        return Err(Error::InvalidArgument(format!("synth: K = {k} < {MIN_K}")));
    }
    let mut names = std::collections::BTreeSet::new();
    for s in specs {
        s.validate(k)?;
        if !names.insert(s.name.as_str()) {
            return Err(Error::InvalidArgument(format!("synth: duplicate archetype `{}`", s.name)));
        }
    }

    let mut planned = Vec::new();
    for (a, spec) in specs.iter().enumerate() {
        let focus = spec
            .focus_topic
            .unwrap_or_else(|| seed::rng(seed, "synth_focus", a as u64).random_range(0..k));
        for j in 0..spec.n_profiles {
            planned.push(Planned {
                id: format!("{}_{j:04}", spec.name),
                archetype: a,
                focus,
            });
        }
    }

    // friendships and shared retweet pools live within an archetype
    let mut friends: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (a, spec) in specs.iter().enumerate() {
        let mut rng = seed::rng(seed, "synth_friends", a as u64);
        let members: Vec<usize> = (0..planned.len()).filter(|&i| planned[i].archetype == a).collect();
        for (x, &i) in members.iter().enumerate() {
            for &j in &members[x + 1..] {
                if rng.random_bool(spec.friend_density) {
                    friends.entry(i).or_default().push(planned[j].id.clone());
                    friends.entry(j).or_default().push(planned[i].id.clone());
                }
            }
        }
    }

    let mut tweets_jsonl = String::new();
    let mut profiles_jsonl = String::new();
    let mut tpv_jsonl = String::new();
    let mut scores = ScoreCache::default();
    let mut labels = BTreeMap::new();
    let mut archetypes = BTreeMap::new();
    let mut focus_topics = BTreeMap::new();

    for (i, p) in planned.iter().enumerate() {
        let spec = &specs[p.archetype];
        let mut rng = seed::rng(seed, "synth_profile", i as u64);
        let [lo, hi] = spec.tweets_per_profile;
        let n = rng.random_range(lo..=hi);
        let start = EPOCH_START + rng.random_range(0..180 * DAY);
        let gaps = inter_event_gaps(spec.burst_pattern, n, &mut rng);
        let focus_tox = spec.focus_toxicity.beta();
        let back_tox = spec.background_toxicity.beta();
        let mut retweeted = Vec::new();
        let mut ts = start;
        for t in 0..n {
            if t > 0 {
                ts += gaps[t - 1];
            }
            let on_focus = rng.random_bool(spec.focus_share);
            let topic = if on_focus { p.focus } else { rng.random_range(0..k) };
            let mut alpha = vec![spec.background_alpha; k];
            alpha[topic] += spec.topic_skew;
            let probs = dirichlet(&alpha, &mut rng);
            let tox = if on_focus { focus_tox.sample(&mut rng) } else { back_tox.sample(&mut rng) };
            let (mut text, tags) = tweet_text(topic, k, spec, &mut rng);
            let is_retweet = rng.random_bool(spec.retweet_rate);
            if is_retweet {
                let source = if rng.random_bool(spec.retweet_share_rate) {
                    format!("{}_pool_{}", spec.name, rng.random_range(0..20))
                } else {
                    format!("{}_{t}", p.id)
                };
                text = format!("RT @user{}: {text}", rng.random_range(0..500));
                retweeted.push(source);
            }
            let tweet_id = format!("{}_{t:04}", p.id);
            let line = json!({
                "tweet_id": tweet_id,
                "profile_id": p.id,
                "text": text,
                "created_at": ts,
                "is_retweet": is_retweet,
                "hashtags": tags,
            });
            tweets_jsonl.push_str(&line.to_string());
            tweets_jsonl.push('\n');
            tpv_jsonl.push_str(&json!({ "tweet_id": tweet_id, "probs": probs }).to_string());
            tpv_jsonl.push('\n');
            scores.insert_toxicity(tweet_id, tox.clamp(0.0, 1.0), Source::Synthetic)?;
        }
        retweeted.sort();
        retweeted.dedup();
        let bot = spec.bot_score.beta();
        let overall: f64 = bot.sample(&mut rng);
        let spammer = (overall * rng.random_range(0.3..0.9)).clamp(0.0, 1.0);
        scores.insert_bot(p.id.clone(), overall, spammer, Source::Synthetic)?;

        let followers: u64 = rng.random_range(10..5_000);
        let meta = json!({
            "profile_id": p.id,
            "followers": followers,
            "following": rng.random_range(10..3_000u64),
            "listed": rng.random_range(0..50u64),
            "statuses": n as u64 + rng.random_range(0..10_000u64),
            "favourites": rng.random_range(0..20_000u64),
            "protected": false,
            "verified": rng.random_bool(0.02),
            "geo_enabled": rng.random_bool(0.3),
            "contributors_enabled": false,
            "withheld_countries": 0,
            "has_location": rng.random_bool(0.6),
            "description_len": rng.random_range(0..160u64),
            "created_at": start - rng.random_range(30..3_000) * DAY,
            "friends_ids": friends.get(&i).cloned().unwrap_or_default(),
            "retweeted_ids": retweeted,
        });
        profiles_jsonl.push_str(&meta.to_string());
        profiles_jsonl.push('\n');
        labels.insert(p.id.clone(), spec.on_mission);
        archetypes.insert(p.id.clone(), spec.name.clone());
        focus_topics.insert(p.id.clone(), p.focus);
    }

    Ok(SynthBundle {
        k,
        tweets_jsonl,
        profiles_jsonl,
        tpv_jsonl,
        scores,
        labels,
        archetypes,
        focus_topics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_toml_round_trip() {
        let spec = SynthSpec::balanced(3, 4);
        assert_eq!(SynthSpec::parse(&spec.to_toml()).unwrap(), spec);
    }

    #[test]
    fn minimal_toml_uses_defaults() {
        let text = r#"
[[archetype]]
name = "g"
n_profiles = 2
on_mission = false
topic_skew = 5.0
focus_toxicity = { mean = 0.1, spread = 0.05 }
background_toxicity = { mean = 0.1, spread = 0.05 }
burst_pattern = "poisson"
tweets_per_profile = [10, 12]
hashtag_rate = 0.1
friend_density = 0.0
retweet_share_rate = 0.0
"#;
        let s = SynthSpec::parse(text).unwrap();
        assert_eq!(s.k, DEFAULT_K);
        assert_eq!(s.archetypes[0].url_rate, 0.1);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = ArchetypeSpec::genuine(0);
        assert!(generate(&[s.clone()], 20, 1).is_err());
        s.n_profiles = 1;
        s.hashtag_rate = 1.5;
        assert!(generate(&[s.clone()], 20, 1).is_err());
        s.hashtag_rate = 0.1;
        s.focus_toxicity = UnitDist::new(0.5, 0.6);
        assert!(generate(&[s.clone()], 20, 1).is_err());
        assert!(generate(&[ArchetypeSpec::genuine(1)], 7, 1).is_err());
        assert!(generate(&[], 20, 1).is_err());
        assert!(generate(&[ArchetypeSpec::genuine(1), ArchetypeSpec::genuine(1)], 20, 1).is_err());
    }

    #[test]
    fn deterministic_and_consistent() {
        let specs = SynthSpec::balanced(3, 3).archetypes;
        let a = generate(&specs, 20, 9).unwrap();
        let b = generate(&specs, 20, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.tweets_jsonl, generate(&specs, 20, 10).unwrap().tweets_jsonl);
        let n_tweets = a.tweets_jsonl.lines().count();
        assert_eq!(n_tweets, a.tpv_jsonl.lines().count());
        assert_eq!(n_tweets, a.scores.toxicity.len());
        assert_eq!(a.labels.values().filter(|&&l| l).count(), 3);
        for line in a.tpv_jsonl.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            let s: f64 = v["probs"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
        assert!(a.scores.toxicity.values().all(|t| (0.0..=1.0).contains(&t.score)));
    }

    #[test]
    fn vocabulary_is_stable() {
        assert_eq!(topic_word(3, 7), topic_word(3, 7));
        assert!(topic_word(0, 0).chars().all(|c| c.is_ascii_lowercase()));
    }
}
