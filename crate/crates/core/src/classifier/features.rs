use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::ProfileMetadata;
use crate::diversity::N_CATEGORIES;
use crate::metrics::MetricBundle;
use crate::topics::Category;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    Content,
    Auxiliary,
    ActivityProfile,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 3] = [
        FeatureGroup::Content,
        FeatureGroup::Auxiliary,
        FeatureGroup::ActivityProfile,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureGroup::Content => "content",
            FeatureGroup::Auxiliary => "auxiliary",
            FeatureGroup::ActivityProfile => "activity_profile",
        }
    }
}

const CONTENT: &[&str] = &[
    "tweets_everyday",
    "tweets_no_topic",
    "tweets_news_blogs",
    "tweets_politics",
    "tweets_entertainment",
    "tweets_sports",
    "tweets_profanity",
    "tweets_health_covid",
    "median_toxicity",
    "flesch_kincaid_grade",
    "flesch_ease",
    "linsear_write",
    "ari",
    "lexical_diversity_mtld",
    "chars_per_tweet",
    "words_per_tweet",
];

const AUXILIARY: &[&str] = &[
    "total_hashtags",
    "unique_hashtags",
    "hashtags_per_tweet",
    "total_urls",
    "unique_urls",
    "urls_per_tweet",
];

const ACTIVITY_PROFILE: &[&str] = &[
    "n_tweets",
    "n_retweets",
    "n_unique",
    "burstiness",
    "median_delta_days",
    "has_location",
    "description_len",
    "protected",
    "followers",
    "following",
    "listed",
    "account_age_days",
    "favourites",
    "geo_enabled",
    "verified",
    "statuses",
    "contributors_enabled",
    "withheld_countries",
];

/// Ordered feature names with their group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureCatalog {
    pub features: Vec<(String, FeatureGroup)>,
}

impl Default for FeatureCatalog {
    fn default() -> Self {
        let tag = |names: &[&str], g| names.iter().map(move |n| (n.to_string(), g)).collect::<Vec<_>>();
        let mut features = tag(CONTENT, FeatureGroup::Content);
        features.extend(tag(AUXILIARY, FeatureGroup::Auxiliary));
        features.extend(tag(ACTIVITY_PROFILE, FeatureGroup::ActivityProfile));
        Self { features }
    }
}

impl FeatureCatalog {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.features.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn indices(&self, group: FeatureGroup) -> Vec<usize> {
        self.features
            .iter()
            .enumerate()
            .filter(|(_, (_, g))| *g == group)
            .map(|(i, _)| i)
            .collect()
    }

    /// SHA-256 over the ordered `name:group` list, hex encoded.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (n, g) in &self.features {
            h.update(n.as_bytes());
            h.update(b":");
            h.update(g.name().as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub profile_id: String,
    pub values: Vec<f64>,
    /// `true` where the value was missing upstream and imputed as 0.
    pub imputed: Vec<bool>,
}

/// Everything feature extraction reads for one profile.
pub struct FeatureInputs<'a> {
    pub profile_id: &'a str,
    pub category_counts: Option<&'a [usize; N_CATEGORIES]>,
    pub metrics: &'a MetricBundle,
    pub metadata: &'a ProfileMetadata,
}

/// Builds the vector in [`FeatureCatalog::default`] order.
pub fn extract_features(inp: &FeatureInputs<'_>) -> FeatureVector {
    let mut values = Vec::with_capacity(40);
    let mut imputed = Vec::with_capacity(40);
    let mut push = |v: Option<f64>| {
        match v.filter(|x| x.is_finite()) {
            Some(x) => {
                values.push(x);
                imputed.push(false);
            }
            None => {
                values.push(0.0);
                imputed.push(true);
            }
        }
    };
    let m = inp.metrics;
    for c in Category::ALL {
        push(inp.category_counts.map(|cc| cc[c.index()] as f64));
    }
    push(m.toxicity.median);
    let lex = m.lexical.as_ref();
    push(lex.map(|l| l.flesch_kincaid_grade));
    push(lex.map(|l| l.flesch_ease));
    push(lex.map(|l| l.linsear_write));
    push(lex.map(|l| l.ari));
    push(lex.map(|l| l.lexical_diversity_mtld));
    push(lex.map(|l| l.chars_per_tweet));
    push(lex.map(|l| l.words_per_tweet));

    let h = &m.hashtags;
    push(Some(h.total_hashtags as f64));
    push(Some(h.unique_hashtags as f64));
    push(Some(h.hashtags_per_tweet));
    push(Some(h.total_urls as f64));
    push(Some(h.unique_urls as f64));
    push(Some(h.urls_per_tweet));

    let a = &m.activity;
    let md = inp.metadata;
    let flag = |b: bool| Some(if b { 1.0 } else { 0.0 });
    push(Some(a.n_tweets as f64));
    push(Some(a.n_retweets as f64));
    push(Some(a.n_unique as f64));
    push(a.burstiness);
    push(a.median_delta_days);
    push(flag(md.has_location));
    push(Some(md.description_len as f64));
    push(flag(md.protected));
    push(Some(md.followers as f64));
    push(Some(md.following as f64));
    push(Some(md.listed as f64));
    push(m.derived.account_age_days);
    push(Some(md.favourites as f64));
    push(flag(md.geo_enabled));
    push(flag(md.verified));
    push(Some(md.statuses as f64));
    push(flag(md.contributors_enabled));
    push(Some(md.withheld_countries as f64));

    FeatureVector {
        profile_id: inp.profile_id.to_owned(),
        values,
        imputed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_util::{timeline, tweet};
    use crate::metrics::compute_metrics;
    use crate::scores::ScoreCache;

    #[test]
    fn catalog_covers_groups_once() {
        let c = FeatureCatalog::default();
        assert_eq!(c.len(), CONTENT.len() + AUXILIARY.len() + ACTIVITY_PROFILE.len());
        assert_eq!(c.len(), 40);
        let total: usize = FeatureGroup::ALL.iter().map(|g| c.indices(*g).len()).sum();
        assert_eq!(total, c.len());
        let mut names = c.names();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), c.len());
    }

    #[test]
    fn null_toxicity_imputed() {
        let tl = timeline((0..12).map(|i| tweet(&i.to_string(), "hello world.", i + 1, false)).collect());
        let m = compute_metrics(&tl, &ScoreCache::default());
        let inp = FeatureInputs {
            profile_id: "p",
            category_counts: Some(&[1, 0, 0, 0, 0, 0, 0, 0]),
            metrics: &m,
            metadata: &tl.metadata,
        };
        let fv = extract_features(&inp);
        let idx = FeatureCatalog::default().names().iter().position(|n| *n == "median_toxicity").unwrap();
        assert_eq!(fv.values[idx], 0.0);
        assert!(fv.imputed[idx]);
        assert_eq!(fv.values.len(), fv.imputed.len());
        assert!(fv.values.iter().all(|v| v.is_finite()));
        assert_eq!(extract_features(&inp), fv);
    }
}
