//! Per-tweet topic probability vectors (TPVs), the topic → category catalog,
//! and per-topic aggregates.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{topic_model_eligible, Corpus};
use crate::error::{Error, Result};
use crate::scores::ScoreCache;
use crate::stats::median;

pub const DEFAULT_K: usize = 200;
/// Sums within this distance of 1 are renormalized at load; beyond it, rejected.
pub const RENORM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Everyday,
    NoTopic,
    NewsBlogs,
    Politics,
    Entertainment,
    Sports,
    Profanity,
    HealthCovid,
}

impl Category {
    pub const ALL: [Category; 8] = [
        Category::Everyday,
        Category::NoTopic,
        Category::NewsBlogs,
        Category::Politics,
        Category::Entertainment,
        Category::Sports,
        Category::Profanity,
        Category::HealthCovid,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Everyday => "everyday",
            Category::NoTopic => "no_topic",
            Category::NewsBlogs => "news_blogs",
            Category::Politics => "politics",
            Category::Entertainment => "entertainment",
            Category::Sports => "sports",
            Category::Profanity => "profanity",
            Category::HealthCovid => "health_covid",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.name() == s.trim())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown category `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicCatalog {
    category_of: Vec<Category>,
}

impl TopicCatalog {
    pub fn new(category_of: Vec<Category>) -> Result<Self> {
        if category_of.is_empty() {
            return Err(Error::EmptyInput("topic catalog"));
        }
        Ok(Self { category_of })
    }

    /// Demo catalog: topic `k` belongs to category `k mod 8`.
    pub fn cyclic(k: usize) -> Self {
        Self {
            category_of: (0..k).map(|i| Category::ALL[i % 8]).collect(),
        }
    }

    pub fn k(&self) -> usize {
        self.category_of.len()
    }

    pub fn category(&self, topic: usize) -> Category {
        self.category_of[topic]
    }

    /// `topic_index<TAB>category` per line; blank lines and `#` comments skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<usize, Category> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = i + 1;
            let (idx, cat) = line
                .split_once('\t')
                .ok_or_else(|| Error::InvalidRow {
                    row,
                    message: "expected `topic_index<TAB>category`".into(),
                })?;
            let idx: usize = idx.trim().parse().map_err(|_| Error::InvalidRow {
                row,
                message: format!("bad topic index `{idx}`"),
            })?;
            let cat: Category = cat.parse().map_err(|e: Error| Error::InvalidRow {
                row,
                message: e.to_string(),
            })?;
            if entries.insert(idx, cat).is_some() {
                return Err(Error::InvalidRow {
                    row,
                    message: format!("topic {idx} listed twice"),
                });
            }
        }
        let k = entries.len();
        if let Some((&max, _)) = entries.last_key_value() {
            if max + 1 != k {
                let missing = (0..=max).find(|i| !entries.contains_key(i)).unwrap_or(max);
                return Err(Error::InvalidArgument(format!("catalog missing topic {missing}")));
            }
        }
        Self::new(entries.into_values().collect())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        self.category_of
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{i}\t{c}\n"))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// A probability distribution over K topics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Tpv(Vec<f64>);

impl Tpv {
    /// Validates and renormalizes raw probabilities.
    pub fn new(probs: Vec<f64>) -> std::result::Result<Self, String> {
        if probs.is_empty() {
            return Err("empty probability vector".into());
        }
        if let Some((i, p)) = probs.iter().enumerate().find(|(_, p)| !p.is_finite() || **p < 0.0) {
            return Err(format!("probability {p} at topic {i} is negative or not finite"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > RENORM_TOLERANCE {
            return Err(format!("probabilities sum to {sum}, beyond tolerance {RENORM_TOLERANCE}"));
        }
        Ok(Self(probs.into_iter().map(|p| p / sum).collect()))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }
}

pub type TpvMap = BTreeMap<String, Tpv>;

#[derive(Serialize, Deserialize)]
struct TpvRow {
    tweet_id: String,
    probs: Vec<f64>,
}

/// Reads `{"tweet_id", "probs": [K reals]}` rows. The first invalid row
/// aborts the load with its row number.
pub fn load_tpvs(path: &Path, k: usize) -> Result<TpvMap> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = TpvMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = i + 1;
        let bad = |message: String| Error::InvalidRow { row, message };
        let parsed: TpvRow = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        if parsed.probs.len() != k {
            return Err(bad(format!("expected {k} probabilities, found {}", parsed.probs.len())));
        }
        let tpv = Tpv::new(parsed.probs).map_err(bad)?;
        out.insert(parsed.tweet_id, tpv);
    }
    Ok(out)
}

pub fn save_tpvs(tpvs: &TpvMap, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for (id, tpv) in tpvs {
        let row = TpvRow {
            tweet_id: id.clone(),
            probs: tpv.0.clone(),
        };
        serde_json::to_writer(&mut f, &row)?;
        f.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    f.flush().map_err(|e| Error::io(path, e))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn dominant_topic(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, p) in probs.iter().enumerate().skip(1) {
        if *p > probs[best] {
            best = i;
        }
    }
    best
}

pub type Assignments = BTreeMap<String, usize>;

pub fn assign_topics(tpvs: &TpvMap) -> Assignments {
    tpvs.iter()
        .map(|(id, tpv)| (id.clone(), dominant_topic(tpv.probs())))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicAggregate {
    pub topic: usize,
    pub tweet_count: usize,
    pub median_toxicity: Option<f64>,
}

pub fn topic_median_toxicity(topic: usize, assignments: &Assignments, cache: &ScoreCache) -> Option<f64> {
    let scores: Vec<f64> = assignments
        .iter()
        .filter(|(_, t)| **t == topic)
        .filter_map(|(id, _)| cache.toxicity_of(id))
        .collect();
    median(&scores)
}

/// One aggregate per topic in `[0, k)`, in a single pass over assignments.
pub fn topic_aggregates(assignments: &Assignments, cache: &ScoreCache, k: usize) -> Vec<TopicAggregate> {
    let mut counts = vec![0usize; k];
    let mut scores: Vec<Vec<f64>> = vec![Vec::new(); k];
    for (id, &topic) in assignments {
        counts[topic] += 1;
        if let Some(s) = cache.toxicity_of(id) {
            scores[topic].push(s);
        }
    }
    (0..k)
        .map(|topic| TopicAggregate {
            topic,
            tweet_count: counts[topic],
            median_toxicity: median(&scores[topic]),
        })
        .collect()
}

fn token_bucket(token: &str, k: usize, seed: u64) -> usize {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(token.as_bytes());
    let d = h.finalize();
    (u64::from_le_bytes(d[..8].try_into().expect("digest length")) % k as u64) as usize
}

/// Keyword-hash TPV: each whitespace token lands in one of `k` buckets and
/// the counts are normalized. Empty text yields the uniform vector.
pub fn baseline_tpv(text_norm: &str, k: usize, seed: u64) -> Tpv {
    let mut counts = vec![0.0; k];
    let mut n = 0.0;
    for tok in text_norm.split_whitespace() {
        counts[token_bucket(&tok.to_lowercase(), k, seed)] += 1.0;
        n += 1.0;
    }
    if n == 0.0 {
        return Tpv(vec![1.0 / k as f64; k]);
    }
    Tpv(counts.into_iter().map(|c| c / n).collect())
}

/// Deterministic stand-in for the external topic model, covering every
/// topic-model-eligible tweet of the corpus.
pub fn baseline_topic_assigner(corpus: &Corpus, k: usize, seed: u64) -> TpvMap {
    corpus
        .profiles
        .values()
        .flat_map(|tl| topic_model_eligible(tl).into_iter())
        .map(|t| (t.tweet_id.clone(), baseline_tpv(&t.text_norm, k, seed)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scores::Source;
    use proptest::prelude::*;

    #[test]
    fn argmax_and_ties() {
        assert_eq!(dominant_topic(&[0.1, 0.7, 0.2]), 1);
        assert_eq!(dominant_topic(&[0.5, 0.5]), 0);
        assert_eq!(dominant_topic(&[1.0 / 200.0; 200]), 0);
    }

    #[test]
    fn renormalizes_within_tolerance() {
        let t = Tpv::new(vec![0.25, 0.25, 0.25, 0.2505]).unwrap();
        assert!((t.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(Tpv::new(vec![0.5, 0.6]).is_err());
        assert!(Tpv::new(vec![1.1, -0.1]).is_err());
    }

    #[test]
    fn load_rejects_dimension_mismatch_with_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tpv.jsonl");
        let good = serde_json::json!({"tweet_id": "a", "probs": vec![1.0 / 200.0; 200]});
        let bad = serde_json::json!({"tweet_id": "b", "probs": vec![1.0 / 199.0; 199]});
        std::fs::write(&p, format!("{good}\n{bad}\n")).unwrap();
        match load_tpvs(&p, 200) {
            Err(Error::InvalidRow { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected row error, got {other:?}"),
        }
    }

    #[test]
    fn median_toxicity_per_topic() {
        let mut cache = ScoreCache::default();
        let mut asg = Assignments::new();
        for (id, topic, s) in [("a", 0, 0.1), ("b", 0, 0.15), ("c", 0, 0.2), ("d", 1, 0.1), ("e", 1, 0.2)] {
            asg.insert(id.into(), topic);
            cache.insert_toxicity(id, s, Source::Mock).unwrap();
        }
        asg.insert("unscored".into(), 2);
        assert_eq!(topic_median_toxicity(0, &asg, &cache), Some(0.15));
        assert!((topic_median_toxicity(1, &asg, &cache).unwrap() - 0.15).abs() < 1e-12);
        assert_eq!(topic_median_toxicity(2, &asg, &cache), None);
        assert_eq!(topic_median_toxicity(3, &asg, &cache), None);
        let agg = topic_aggregates(&asg, &cache, 4);
        assert_eq!(agg.iter().map(|a| a.tweet_count).sum::<usize>(), asg.len());
        assert_eq!(agg[2].median_toxicity, None);
    }

    #[test]
    fn catalog_round_trip_and_validation() {
        let cat = TopicCatalog::cyclic(20);
        let text = cat.to_text();
        let back = TopicCatalog::parse(&text).unwrap();
        assert_eq!(back.to_text(), text);
        assert_eq!(back.category(9), Category::NoTopic);
        assert!(TopicCatalog::parse("0\tpolitics\n2\tsports\n").is_err());
        assert!(TopicCatalog::parse("0\tpolitics\n0\tsports\n").is_err());
        assert!(TopicCatalog::parse("0\tcooking\n").is_err());
    }

    #[test]
    fn baseline_single_token_one_hot() {
        let t = baseline_tpv("hello", 16, 42);
        assert_eq!(t.probs().iter().filter(|p| **p == 1.0).count(), 1);
        assert_eq!(baseline_tpv("a b c", 16, 42), baseline_tpv("a b c", 16, 42));
        assert_ne!(baseline_tpv("a b c d e f", 16, 1), baseline_tpv("a b c d e f", 16, 2));
    }

    proptest! {
        #[test]
        fn argmax_scale_invariant(v in proptest::collection::vec(0.0f64..1.0, 1..50), c in 0.01f64..100.0) {
            let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
            let s: f64 = scaled.iter().sum();
            let renorm: Vec<f64> = if s > 0.0 { scaled.iter().map(|x| x / s).collect() } else { scaled };
            prop_assert_eq!(dominant_topic(&v), dominant_topic(&renorm));
        }
    }
}
