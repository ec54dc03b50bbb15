//! Timeline ingestion: JSONL loading, validation, normalization and the
//! canonical in-memory corpus.

mod load;
mod normalize;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use load::{load_metadata, load_timelines, parse_timestamp};
pub use normalize::{
    clean_hashtag, count_mentions, extract_hashtags, extract_urls, normalize_tweet,
    replace_emoji, token_count, URL_TOKEN, USER_TOKEN,
};

/// Profiles with fewer tweets than this are dropped at ingest.
pub const MIN_TIMELINE_TWEETS: usize = 10;
/// Inclusive token bounds for tweets passed to the topic model.
pub const MIN_TOPIC_TOKENS: usize = 10;
pub const MAX_TOPIC_TOKENS: usize = 64;

const CACHE_MAGIC: &[u8; 8] = b"MPCORPUS";
const CACHE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tweet {
    pub tweet_id: String,
    pub profile_id: String,
    pub text_raw: String,
    pub text_norm: String,
    /// UTC epoch seconds.
    pub timestamp: i64,
    pub is_retweet: bool,
    pub hashtags: Vec<String>,
    pub urls: Vec<String>,
    pub mentions_count: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProfileMetadata {
    pub followers: u64,
    pub following: u64,
    pub listed: u64,
    pub statuses: u64,
    pub favourites: u64,
    pub protected: bool,
    pub verified: bool,
    pub geo_enabled: bool,
    pub contributors_enabled: bool,
    pub withheld_countries: u64,
    pub has_location: bool,
    pub description_len: u64,
    /// UTC epoch seconds; 0 when unknown.
    pub created_at: i64,
    pub friends_ids: Option<Vec<String>>,
    pub retweeted_ids: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileTimeline {
    pub profile_id: String,
    /// Ascending by timestamp, ties broken by tweet_id.
    pub tweets: Vec<Tweet>,
    pub metadata: ProfileMetadata,
    pub has_metadata: bool,
}

impl ProfileTimeline {
    pub fn timestamps(&self) -> Vec<i64> {
        self.tweets.iter().map(|t| t.timestamp).collect()
    }

    pub fn retweet_count(&self) -> usize {
        self.tweets.iter().filter(|t| t.is_retweet).count()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileIngestStats {
    pub input: usize,
    pub duplicate: usize,
    pub dropped_short: usize,
    pub kept: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub lines: usize,
    pub blank: usize,
    pub malformed: usize,
    pub duplicate: usize,
    /// Tweets belonging to profiles dropped for being too short.
    pub dropped_short_tweets: usize,
    pub dropped_short_profiles: usize,
    pub kept_tweets: usize,
    pub profiles_without_metadata: usize,
    pub per_profile: BTreeMap<String, ProfileIngestStats>,
}

impl IngestStats {
    /// Every input line is accounted for exactly once.
    pub fn is_conserved(&self) -> bool {
        let line_total = self.blank
            + self.malformed
            + self.duplicate
            + self.dropped_short_tweets
            + self.kept_tweets;
        line_total == self.lines
            && self
                .per_profile
                .values()
                .all(|p| p.duplicate + p.dropped_short + p.kept == p.input)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub profiles: BTreeMap<String, ProfileTimeline>,
    pub ingest_stats: IngestStats,
}

#[derive(Serialize, Deserialize)]
struct CacheEnvelope {
    version: u32,
    corpus: Corpus,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn tweets(&self) -> impl Iterator<Item = &Tweet> {
        self.profiles.values().flat_map(|p| p.tweets.iter())
    }

    /// Versioned binary cache (`MPCORPUS` magic, u32 version, bincode body).
    pub fn save(&self, path: &Path) -> Result<()> {
        let body = bincode::serialize(&CacheEnvelope {
            version: CACHE_VERSION,
            corpus: self.clone(),
        })
        .map_err(|e| Error::Encoding(e.to_string()))?;
        let mut bytes = Vec::with_capacity(body.len() + 8);
        bytes.extend_from_slice(CACHE_MAGIC);
        bytes.extend_from_slice(&body);
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let body = bytes
            .strip_prefix(CACHE_MAGIC.as_slice())
            .ok_or_else(|| Error::Encoding(format!("{} is not a corpus cache", path.display())))?;
        let env: CacheEnvelope =
            bincode::deserialize(body).map_err(|e| Error::Encoding(e.to_string()))?;
        if env.version != CACHE_VERSION {
            return Err(Error::Encoding(format!(
                "corpus cache version {} unsupported (expected {CACHE_VERSION})",
                env.version
            )));
        }
        Ok(env.corpus)
    }
}

/// Non-retweets, first occurrence per distinct normalized text, input order kept.
pub fn unique_tweets(timeline: &ProfileTimeline) -> Vec<&Tweet> {
    let mut seen = HashSet::new();
    timeline
        .tweets
        .iter()
        .filter(|t| !t.is_retweet)
        .filter(|t| seen.insert(t.text_norm.as_str()))
        .collect()
}

/// Unique tweets whose token count lies in `[MIN_TOPIC_TOKENS, MAX_TOPIC_TOKENS]`.
pub fn topic_model_eligible(timeline: &ProfileTimeline) -> Vec<&Tweet> {
    unique_tweets(timeline)
        .into_iter()
        .filter(|t| (MIN_TOPIC_TOKENS..=MAX_TOPIC_TOKENS).contains(&token_count(&t.text_norm)))
        .collect()
}

/// Retweet rule: explicit flag when given, else a leading `RT @USER`.
pub fn detect_retweet(flag: Option<bool>, text_norm: &str) -> bool {
    flag.unwrap_or_else(|| text_norm.starts_with("RT @USER"))
}

#[cfg(test)]
pub(crate) mod test_util {
    use super::*;

    pub fn tweet(id: &str, text: &str, ts: i64, rt: bool) -> Tweet {
        Tweet {
            tweet_id: id.into(),
            profile_id: "p".into(),
            text_raw: text.into(),
            text_norm: normalize_tweet(text),
            timestamp: ts,
            is_retweet: rt,
            hashtags: vec![],
            urls: vec![],
            mentions_count: 0,
        }
    }

    pub fn timeline(tweets: Vec<Tweet>) -> ProfileTimeline {
        ProfileTimeline {
            profile_id: "p".into(),
            tweets,
            metadata: ProfileMetadata::default(),
            has_metadata: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::test_util::*;
    use super::*;

    fn texts(ts: &[&Tweet]) -> Vec<String> {
        ts.iter().map(|t| t.text_norm.clone()).collect()
    }

    #[test]
    fn unique_drops_repeats() {
        let tl = timeline(vec![
            tweet("1", "a", 1, false),
            tweet("2", "a", 2, false),
            tweet("3", "b", 3, false),
        ]);
        assert_eq!(texts(&unique_tweets(&tl)), vec!["a", "b"]);
    }

    #[test]
    fn unique_all_retweets_is_empty() {
        let tl = timeline((0..3).map(|i| tweet(&i.to_string(), "x", i, true)).collect());
        assert!(unique_tweets(&tl).is_empty());
    }

    #[test]
    fn unique_mixed_fixture() {
        let tl = timeline(vec![
            tweet("1", "one", 1, false),
            tweet("2", "two", 2, true),
            tweet("3", "three", 3, false),
            tweet("4", "one", 4, false),
            tweet("5", "four", 5, false),
        ]);
        assert_eq!(texts(&unique_tweets(&tl)), vec!["one", "three", "four"]);
    }

    #[test]
    fn unique_dedups_after_normalization() {
        let tl = timeline(vec![
            tweet("1", "hi @alice http://a.b", 1, false),
            tweet("2", "hi   @bob https://c.d", 2, false),
        ]);
        assert_eq!(unique_tweets(&tl).len(), 1);
    }

    #[test]
    fn unique_preserves_order_under_permutation() {
        let words = ["d", "a", "c", "a", "b", "d", "e"];
        let tl = timeline(
            words
                .iter()
                .enumerate()
                .map(|(i, w)| tweet(&i.to_string(), w, i as i64, false))
                .collect(),
        );
        assert_eq!(texts(&unique_tweets(&tl)), vec!["d", "a", "c", "b", "e"]);
    }

    fn words(n: usize) -> String {
        (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn eligibility_bounds() {
        let tl = timeline(vec![
            tweet("1", &words(9), 1, false),
            tweet("2", &words(10), 2, false),
            tweet("3", &words(64), 3, false),
            tweet("4", &words(65), 4, false),
        ]);
        let ids: Vec<_> = topic_model_eligible(&tl).iter().map(|t| t.tweet_id.clone()).collect();
        assert_eq!(ids, vec!["2", "3"]);
    }

    #[test]
    fn retweet_detection_fallback() {
        assert!(detect_retweet(None, "RT @USER: hello"));
        assert!(!detect_retweet(None, "hello RT @USER"));
        assert!(!detect_retweet(Some(false), "RT @USER: hello"));
    }
}
