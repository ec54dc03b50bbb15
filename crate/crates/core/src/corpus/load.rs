use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::Value;

use super::normalize::{clean_hashtag, count_mentions, extract_hashtags, extract_urls};
use super::{
    detect_retweet, normalize_tweet, Corpus, IngestStats, ProfileIngestStats, ProfileMetadata,
    ProfileTimeline, Tweet, MIN_TIMELINE_TWEETS,
};
use crate::error::{Error, Result};

#[derive(Deserialize)]
struct RawTweet {
    tweet_id: Value,
    profile_id: Value,
    text: String,
    created_at: Value,
    is_retweet: Option<bool>,
    hashtags: Option<Vec<String>>,
    urls: Option<Vec<String>>,
    mentions: Option<u32>,
}

#[derive(Deserialize)]
struct RawMetadata {
    profile_id: Value,
    #[serde(default)]
    followers: u64,
    #[serde(default)]
    following: u64,
    #[serde(default)]
    listed: u64,
    #[serde(default)]
    statuses: u64,
    #[serde(default)]
    favourites: u64,
    #[serde(default)]
    protected: bool,
    #[serde(default)]
    verified: bool,
    #[serde(default)]
    geo_enabled: bool,
    #[serde(default)]
    contributors_enabled: bool,
    #[serde(default)]
    withheld_countries: u64,
    #[serde(default)]
    has_location: bool,
    #[serde(default)]
    description_len: u64,
    created_at: Option<Value>,
    friends_ids: Option<Vec<Value>>,
    retweeted_ids: Option<Vec<Value>>,
}

/// Accepts integer/float epoch seconds or an RFC 3339 / ISO-8601 string.
pub fn parse_timestamp(v: &Value) -> Option<i64> {
    match v {
        Value::Number(n) => n.as_i64().or_else(|| n.as_f64().map(|f| f as i64)),
        Value::String(s) => {
            let s = s.trim();
            if let Ok(n) = s.parse::<i64>() {
                return Some(n);
            }
            if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(s) {
                return Some(dt.timestamp());
            }
            if let Ok(dt) = chrono::DateTime::parse_from_str(s, "%a %b %d %H:%M:%S %z %Y") {
                return Some(dt.timestamp());
            }
            for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"] {
                if let Ok(dt) = chrono::NaiveDateTime::parse_from_str(s, fmt) {
                    return Some(dt.and_utc().timestamp());
                }
            }
            None
        }
        _ => None,
    }
}

fn id_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) if !s.is_empty() => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn parse_tweet_line(line: &str) -> std::result::Result<Tweet, String> {
    let raw: RawTweet = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let tweet_id = id_string(&raw.tweet_id).ok_or("tweet_id must be a non-empty string")?;
    let profile_id = id_string(&raw.profile_id).ok_or("profile_id must be a non-empty string")?;
    let timestamp = parse_timestamp(&raw.created_at).ok_or("unparseable created_at")?;
    if timestamp <= 0 {
        return Err(format!("created_at {timestamp} must be positive"));
    }
    let text_norm = normalize_tweet(&raw.text);
    let hashtags = match raw.hashtags {
        Some(tags) => tags.iter().map(|t| clean_hashtag(t)).filter(|t| !t.is_empty()).collect(),
        None => extract_hashtags(&raw.text),
    };
    Ok(Tweet {
        is_retweet: detect_retweet(raw.is_retweet, &text_norm),
        urls: raw.urls.unwrap_or_else(|| extract_urls(&raw.text)),
        mentions_count: raw.mentions.unwrap_or_else(|| count_mentions(&raw.text)),
        hashtags,
        tweet_id,
        profile_id,
        text_raw: raw.text,
        text_norm,
        timestamp,
    })
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(file)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(path, e))
}

/// Loads tweets (and optional profile metadata) into a [`Corpus`].
///
/// Line parsing runs in parallel; the merge walks lines in file order so the
/// result never depends on scheduling.
pub fn load_timelines(tweets: &Path, profiles: Option<&Path>, strict: bool) -> Result<Corpus> {
    let lines = read_lines(tweets)?;
    let parsed: Vec<Option<std::result::Result<Tweet, String>>> = lines
        .par_iter()
        .map(|l| (!l.trim().is_empty()).then(|| parse_tweet_line(l)))
        .collect();

    let mut stats = IngestStats {
        lines: lines.len(),
        ..IngestStats::default()
    };
    let mut by_profile: BTreeMap<String, Vec<Tweet>> = BTreeMap::new();
    let mut seen_ids: HashSet<(String, String)> = HashSet::new();

    for (idx, rec) in parsed.into_iter().enumerate() {
        match rec {
            None => stats.blank += 1,
            Some(Err(message)) => {
                if strict {
                    return Err(Error::Schema {
                        path: tweets.to_path_buf(),
                        line: idx + 1,
                        message,
                    });
                }
                stats.malformed += 1;
            }
            Some(Ok(tweet)) => {
                let entry = stats.per_profile.entry(tweet.profile_id.clone()).or_default();
                entry.input += 1;
                if seen_ids.insert((tweet.profile_id.clone(), tweet.tweet_id.clone())) {
                    by_profile.entry(tweet.profile_id.clone()).or_default().push(tweet);
                } else {
                    entry.duplicate += 1;
                    stats.duplicate += 1;
                }
            }
        }
    }

    let mut metadata = match profiles {
        Some(p) => load_metadata(p, strict)?,
        None => BTreeMap::new(),
    };

    let mut corpus = Corpus::default();
    for (profile_id, mut tweets) in by_profile {
        let pstats: &mut ProfileIngestStats = stats.per_profile.get_mut(&profile_id).expect("seen");
        if tweets.len() < MIN_TIMELINE_TWEETS {
            pstats.dropped_short = tweets.len();
            stats.dropped_short_tweets += tweets.len();
            stats.dropped_short_profiles += 1;
            continue;
        }
        pstats.kept = tweets.len();
        stats.kept_tweets += tweets.len();
        tweets.sort_by(|a, b| {
            a.timestamp
                .cmp(&b.timestamp)
                .then_with(|| a.tweet_id.cmp(&b.tweet_id))
        });
        let (mut meta, has_metadata) = match metadata.remove(&profile_id) {
            Some(m) => (m, true),
            None => {
                stats.profiles_without_metadata += 1;
                (ProfileMetadata::default(), false)
            }
        };
        let last = tweets.last().map(|t| t.timestamp).unwrap_or(0);
        if meta.created_at > last {
            warn!(
                "profile {profile_id}: created_at {} after last tweet {last}; clamping",
                meta.created_at
            );
            meta.created_at = last;
        }
        corpus.profiles.insert(
            profile_id.clone(),
            ProfileTimeline {
                profile_id,
                tweets,
                metadata: meta,
                has_metadata,
            },
        );
    }
    corpus.ingest_stats = stats;
    Ok(corpus)
}

/// Profile metadata JSONL keyed by `profile_id`. Later lines win on repeats.
pub fn load_metadata(path: &Path, strict: bool) -> Result<BTreeMap<String, ProfileMetadata>> {
    let lines = read_lines(path)?;
    let mut out = BTreeMap::new();
    for (idx, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<RawMetadata>(line)
            .map_err(|e| e.to_string())
            .and_then(|raw| {
                let id = id_string(&raw.profile_id).ok_or("profile_id must be a non-empty string")?;
                let created_at = match &raw.created_at {
                    None | Some(Value::Null) => 0,
                    Some(v) => parse_timestamp(v).ok_or("unparseable created_at")?,
                };
                let ids = |v: Option<Vec<Value>>| {
                    v.map(|xs| xs.iter().filter_map(id_string).collect::<Vec<_>>())
                };
                Ok::<_, String>((
                    id,
                    ProfileMetadata {
                        followers: raw.followers,
                        following: raw.following,
                        listed: raw.listed,
                        statuses: raw.statuses,
                        favourites: raw.favourites,
                        protected: raw.protected,
                        verified: raw.verified,
                        geo_enabled: raw.geo_enabled,
                        contributors_enabled: raw.contributors_enabled,
                        withheld_countries: raw.withheld_countries,
                        has_location: raw.has_location,
                        description_len: raw.description_len,
                        created_at,
                        friends_ids: ids(raw.friends_ids),
                        retweeted_ids: ids(raw.retweeted_ids),
                    },
                ))
            });
        match parsed {
            Ok((id, meta)) => {
                out.insert(id, meta);
            }
            Err(message) if strict => {
                return Err(Error::Schema {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message,
                })
            }
            Err(message) => warn!("{}:{}: skipping metadata: {message}", path.display(), idx + 1),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tweets(sizes: &[(&str, usize)]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for (pid, n) in sizes {
            for i in 0..*n {
                writeln!(
                    f,
                    r#"{{"tweet_id":"{pid}-{i}","profile_id":"{pid}","text":"tweet {i}","created_at":{}}}"#,
                    1_600_000_000 + i as i64 * 60
                )
                .unwrap();
            }
        }
        f
    }

    #[test]
    fn drops_short_profiles() {
        let f = write_tweets(&[("a", 12), ("b", 9), ("c", 50)]);
        let c = load_timelines(f.path(), None, false).unwrap();
        assert_eq!(c.len(), 2);
        assert!(!c.profiles.contains_key("b"));
        assert_eq!(c.ingest_stats.dropped_short_profiles, 1);
        assert_eq!(c.ingest_stats.dropped_short_tweets, 9);
        assert!(c.ingest_stats.is_conserved());
    }

    #[test]
    fn empty_file() {
        let f = tempfile::NamedTempFile::new().unwrap();
        let c = load_timelines(f.path(), None, false).unwrap();
        assert!(c.is_empty());
        assert_eq!(c.ingest_stats, IngestStats::default());
    }

    #[test]
    fn duplicate_tweet_id_kept_once() {
        let f = write_tweets(&[("a", 11)]);
        let mut body = std::fs::read_to_string(f.path()).unwrap();
        body.push_str(
            r#"{"tweet_id":"a-3","profile_id":"a","text":"again","created_at":1700000000}"#,
        );
        body.push('\n');
        std::fs::write(f.path(), body).unwrap();
        let c = load_timelines(f.path(), None, false).unwrap();
        let p = &c.profiles["a"];
        assert_eq!(p.tweets.len(), 11);
        assert_eq!(p.tweets.iter().find(|t| t.tweet_id == "a-3").unwrap().text_raw, "tweet 3");
        assert_eq!(c.ingest_stats.duplicate, 1);
        assert_eq!(c.ingest_stats.per_profile["a"].duplicate, 1);
        assert!(c.ingest_stats.is_conserved());
    }

    #[test]
    fn malformed_lines_lenient_vs_strict() {
        let f = write_tweets(&[("a", 10)]);
        let mut body = std::fs::read_to_string(f.path()).unwrap();
        body.insert_str(0, "{not json}\n\n");
        std::fs::write(f.path(), &body).unwrap();
        let c = load_timelines(f.path(), None, false).unwrap();
        assert_eq!(c.ingest_stats.malformed, 1);
        assert_eq!(c.ingest_stats.blank, 1);
        assert!(c.ingest_stats.is_conserved());
        match load_timelines(f.path(), None, true) {
            Err(Error::Schema { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn sorts_by_time_then_id() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for (id, ts) in [("b", 5), ("a", 5), ("c", 1)].iter() {
            writeln!(f, r#"{{"tweet_id":"{id}","profile_id":"p","text":"x","created_at":{ts}}}"#).unwrap();
        }
        for i in 0..8 {
            writeln!(f, r#"{{"tweet_id":"z{i}","profile_id":"p","text":"x","created_at":"2021-01-0{}T00:00:00Z"}}"#, i + 1).unwrap();
        }
        let c = load_timelines(f.path(), None, false).unwrap();
        let ids: Vec<_> = c.profiles["p"].tweets.iter().take(3).map(|t| t.tweet_id.as_str()).collect();
        assert_eq!(ids, vec!["c", "a", "b"]);
    }

    #[test]
    fn timestamp_formats() {
        assert_eq!(parse_timestamp(&Value::from(1600000000)), Some(1600000000));
        assert_eq!(parse_timestamp(&Value::from("2021-01-01T00:00:00Z")), Some(1609459200));
        assert_eq!(
            parse_timestamp(&Value::from("Fri Jan 01 00:00:00 +0000 2021")),
            Some(1609459200)
        );
        assert_eq!(parse_timestamp(&Value::from("yesterday")), None);
    }

    #[test]
    fn metadata_attached_and_missing_counted() {
        let f = write_tweets(&[("a", 10), ("b", 10)]);
        let mut m = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            m,
            r#"{{"profile_id":"a","followers":5,"following":2,"verified":true,"created_at":"2015-06-01T00:00:00Z","friends_ids":["b",7]}}"#
        )
        .unwrap();
        let c = load_timelines(f.path(), Some(m.path()), true).unwrap();
        let a = &c.profiles["a"];
        assert!(a.has_metadata);
        assert_eq!(a.metadata.followers, 5);
        assert!(a.metadata.verified);
        assert_eq!(a.metadata.friends_ids.as_deref(), Some(&["b".to_string(), "7".to_string()][..]));
        assert!(!c.profiles["b"].has_metadata);
        assert_eq!(c.ingest_stats.profiles_without_metadata, 1);
    }

    #[test]
    fn binary_cache_round_trip() {
        let f = write_tweets(&[("a", 10)]);
        let c = load_timelines(f.path(), None, false).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        c.save(out.path()).unwrap();
        assert_eq!(Corpus::load(out.path()).unwrap(), c);
        std::fs::write(out.path(), b"garbage").unwrap();
        assert!(Corpus::load(out.path()).is_err());
    }
}
