//! Per-profile metric battery: toxicity concentration, readability and
//! lexical diversity, activity timing, hashtag/URL usage and profile
//! metadata derivations.

mod activity;
mod gini;
mod readability;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{unique_tweets, ProfileTimeline};
use crate::scores::ScoreCache;
use crate::stats::median;
use crate::topics::Assignments;

pub use activity::{
    burstiness, median_delta_days, normalized_burstiness, time_delta_histogram, Burstiness,
    MIN_BURST_EVENTS, SECONDS_PER_DAY,
};
pub use gini::gini_index;
pub use readability::{
    count_sentences, count_syllables, mtld, readability, text_counts, words, ReadabilityScores,
    TextCounts, MTLD_THRESHOLD,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToxicityMetrics {
    pub median: Option<f64>,
    pub gini: Option<f64>,
    pub n_scored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexicalMetrics {
    pub flesch_ease: f64,
    pub flesch_kincaid_grade: f64,
    pub linsear_write: f64,
    pub ari: f64,
    pub lexical_diversity_mtld: f64,
    pub chars_per_tweet: f64,
    pub words_per_tweet: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityMetrics {
    pub n_tweets: usize,
    pub n_unique: usize,
    pub n_retweets: usize,
    pub burstiness: Option<f64>,
    pub r_cv: Option<f64>,
    pub n_events: usize,
    pub delta_days_hist: BTreeMap<i64, usize>,
    pub median_delta_days: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HashtagMetrics {
    pub total_hashtags: usize,
    pub unique_hashtags: usize,
    pub hashtags_per_tweet: f64,
    pub total_urls: usize,
    pub unique_urls: usize,
    pub urls_per_tweet: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileDerived {
    pub followers_following_ratio: Option<f64>,
    /// Days between account creation and the latest tweet.
    pub account_age_days: Option<f64>,
    pub creation_year: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricBundle {
    pub profile_id: String,
    pub toxicity: ToxicityMetrics,
    pub lexical: Option<LexicalMetrics>,
    pub activity: ActivityMetrics,
    pub hashtags: HashtagMetrics,
    pub derived: ProfileDerived,
}

/// Median and Gini over the profile's scored tweets; unscored tweets are
/// skipped rather than imputed.
pub fn toxicity_metrics(timeline: &ProfileTimeline, cache: &ScoreCache) -> ToxicityMetrics {
    let scores: Vec<f64> = timeline
        .tweets
        .iter()
        .filter_map(|t| cache.toxicity_of(&t.tweet_id))
        .collect();
    ToxicityMetrics {
        median: median(&scores),
        gini: gini_index(&scores).ok(),
        n_scored: scores.len(),
    }
}

/// Readability scores averaged per tweet; MTLD over the profile's pooled
/// word stream. `None` when no tweet has words.
pub fn readability_metrics<'a>(texts: impl IntoIterator<Item = &'a str>) -> Option<LexicalMetrics> {
    let mut sums = [0.0f64; 4];
    let mut n_scored = 0usize;
    let mut n_texts = 0usize;
    let mut chars = 0usize;
    let mut tokens = 0usize;
    let mut pooled: Vec<String> = Vec::new();
    for text in texts {
        if text.trim().is_empty() {
            continue;
        }
        n_texts += 1;
        chars += text.chars().count();
        tokens += text.split_whitespace().count();
        pooled.extend(words(text).into_iter().map(str::to_lowercase));
        if let Some(r) = readability(&text_counts(text)) {
            n_scored += 1;
            sums[0] += r.flesch_ease;
            sums[1] += r.flesch_kincaid_grade;
            sums[2] += r.linsear_write;
            sums[3] += r.ari;
        }
    }
    if n_scored == 0 {
        return None;
    }
    let k = n_scored as f64;
    let pooled_refs: Vec<&str> = pooled.iter().map(String::as_str).collect();
    Some(LexicalMetrics {
        flesch_ease: sums[0] / k,
        flesch_kincaid_grade: sums[1] / k,
        linsear_write: sums[2] / k,
        ari: sums[3] / k,
        lexical_diversity_mtld: mtld(&pooled_refs).unwrap_or(0.0),
        chars_per_tweet: chars as f64 / n_texts as f64,
        words_per_tweet: tokens as f64 / n_texts as f64,
    })
}

pub fn activity_metrics(timeline: &ProfileTimeline) -> ActivityMetrics {
    let ts = timeline.timestamps();
    let b = burstiness(&ts);
    ActivityMetrics {
        n_tweets: timeline.tweets.len(),
        n_unique: unique_tweets(timeline).len(),
        n_retweets: timeline.retweet_count(),
        burstiness: b.map(|b| b.b),
        r_cv: b.map(|b| b.r),
        n_events: ts.len(),
        delta_days_hist: time_delta_histogram(&ts),
        median_delta_days: median_delta_days(&ts),
    }
}

/// Burstiness restricted to the tweets assigned to one topic.
pub fn topic_burstiness(timeline: &ProfileTimeline, assignments: &Assignments, topic: usize) -> Option<Burstiness> {
    let ts: Vec<i64> = timeline
        .tweets
        .iter()
        .filter(|t| assignments.get(&t.tweet_id) == Some(&topic))
        .map(|t| t.timestamp)
        .collect();
    burstiness(&ts)
}

pub fn hashtag_url_stats(timeline: &ProfileTimeline) -> HashtagMetrics {
    let n = timeline.tweets.len();
    let mut tags = BTreeSet::new();
    let mut urls = BTreeSet::new();
    let mut total_tags = 0;
    let mut total_urls = 0;
    for t in &timeline.tweets {
        total_tags += t.hashtags.len();
        total_urls += t.urls.len();
        tags.extend(t.hashtags.iter().map(|h| h.to_lowercase()));
        urls.extend(t.urls.iter().map(|u| u.to_lowercase()));
    }
    let per = |x: usize| if n == 0 { 0.0 } else { x as f64 / n as f64 };
    HashtagMetrics {
        total_hashtags: total_tags,
        unique_hashtags: tags.len(),
        hashtags_per_tweet: per(total_tags),
        total_urls,
        unique_urls: urls.len(),
        urls_per_tweet: per(total_urls),
    }
}

pub fn profile_derived(timeline: &ProfileTimeline) -> ProfileDerived {
    let m = &timeline.metadata;
    let last = timeline.tweets.last().map(|t| t.timestamp);
    let created = (m.created_at > 0).then_some(m.created_at);
    ProfileDerived {
        followers_following_ratio: (m.following > 0).then(|| m.followers as f64 / m.following as f64),
        account_age_days: created
            .zip(last)
            .map(|(c, l)| (l - c).max(0) as f64 / SECONDS_PER_DAY as f64),
        creation_year: created
            .and_then(|c| chrono::DateTime::from_timestamp(c, 0))
            .map(|d| chrono::Datelike::year(&d)),
    }
}

pub fn compute_metrics(timeline: &ProfileTimeline, cache: &ScoreCache) -> MetricBundle {
    let unique = unique_tweets(timeline);
    MetricBundle {
        profile_id: timeline.profile_id.clone(),
        toxicity: toxicity_metrics(timeline, cache),
        lexical: readability_metrics(unique.iter().map(|t| t.text_norm.as_str())),
        activity: activity_metrics(timeline),
        hashtags: hashtag_url_stats(timeline),
        derived: profile_derived(timeline),
    }
}
