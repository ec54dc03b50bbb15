//! On-mission detection: normalized topic probability vectors (nTPV), topic
//! labels, shared-label clusters gated by topic toxicity, and supporting
//! network / retweet / top-3 evidence. Also hosts the Fleiss-kappa utility
//! used for annotation agreement.

mod evidence;
mod kappa;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::percentile_sorted;
use crate::topics::{dominant_topic, Category, TopicAggregate, TopicCatalog, Tpv};

pub use evidence::{overlap_evidence, top3_gap, OverlapEvidence};
pub use kappa::{fleiss_kappa, parse_ratings_csv, AgreementReport};

/// Replacement for zero entries of the global average.
pub const GLOBAL_EPSILON: f64 = 1e-12;
pub const DEFAULT_MIN_CLUSTER: usize = 3;

/// Denominator of the global topic average.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlobalNormalization {
    /// Sum of all tweet TPVs divided by the number of profiles.
    #[default]
    PerProfile,
    /// Sum of all tweet TPVs divided by the number of tweets.
    PerTweet,
}

/// Elementwise sum of every tweet TPV divided by the chosen denominator.
/// Zero entries are lifted to [`GLOBAL_EPSILON`] so nTPV stays finite.
pub fn global_topic_average<'a>(
    tpvs: impl IntoIterator<Item = &'a Tpv>,
    n_profiles: usize,
    mode: GlobalNormalization,
) -> Result<Vec<f64>> {
    let mut sum: Vec<f64> = Vec::new();
    let mut n_tweets = 0usize;
    for tpv in tpvs {
        if sum.is_empty() {
            sum = vec![0.0; tpv.k()];
        }
        if tpv.k() != sum.len() {
            return Err(Error::InvalidArgument(format!(
                "mixed TPV dimensions {} and {}",
                sum.len(),
                tpv.k()
            )));
        }
        for (s, p) in sum.iter_mut().zip(tpv.probs()) {
            *s += p;
        }
        n_tweets += 1;
    }
    if n_tweets == 0 {
        return Err(Error::EmptyInput("no TPVs for global average"));
    }
    if n_profiles == 0 {
        return Err(Error::InvalidArgument("n_profiles must be ≥ 1".into()));
    }
    let denom = match mode {
        GlobalNormalization::PerProfile => n_profiles,
        GlobalNormalization::PerTweet => n_tweets,
    } as f64;
    let mut zeros = 0;
    let avg = sum
        .into_iter()
        .map(|s| {
            let v = s / denom;
            if v > 0.0 {
                v
            } else {
                zeros += 1;
                GLOBAL_EPSILON
            }
        })
        .collect();
    if zeros > 0 {
        warn!("{zeros} topic(s) have zero global mass; using epsilon {GLOBAL_EPSILON}");
    }
    Ok(avg)
}

pub fn mean_tpv(tpvs: &[&Tpv]) -> Option<Vec<f64>> {
    let first = tpvs.first()?;
    let mut mean = vec![0.0; first.k()];
    for t in tpvs {
        for (m, p) in mean.iter_mut().zip(t.probs()) {
            *m += p;
        }
    }
    let n = tpvs.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Some(mean)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedTpv {
    pub profile_id: String,
    pub ntpv: Vec<f64>,
}

/// Profile mean TPV divided elementwise by the global average.
pub fn ntpv(profile_id: &str, tpvs: &[&Tpv], global_avg: &[f64]) -> Result<NormalizedTpv> {
    let mean = mean_tpv(tpvs).ok_or(Error::EmptyInput("profile has no TPVs"))?;
    Ok(NormalizedTpv {
        profile_id: profile_id.to_owned(),
        ntpv: mean.iter().zip(global_avg).map(|(m, g)| m / g).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicLabelAssignment {
    pub profile_id: String,
    pub topic_label: usize,
    pub label_category: Category,
    pub label_median_toxicity: Option<f64>,
}

pub fn topic_label(ntpv: &NormalizedTpv, catalog: &TopicCatalog, aggregates: &[TopicAggregate]) -> TopicLabelAssignment {
    let topic = dominant_topic(&ntpv.ntpv);
    TopicLabelAssignment {
        profile_id: ntpv.profile_id.clone(),
        topic_label: topic,
        label_category: catalog.category(topic),
        label_median_toxicity: aggregates.get(topic).and_then(|a| a.median_toxicity),
    }
}

/// Minimum topic median toxicity for a cluster to count as on-mission.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToxGate {
    /// Percentile (0–100) over all topics' median toxicities.
    Percentile(f64),
    Absolute(f64),
}

impl Default for ToxGate {
    fn default() -> Self {
        ToxGate::Percentile(75.0)
    }
}

impl FromStr for ToxGate {
    type Err = Error;

    /// `p75` for a percentile, `0.14` for an absolute level.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidArgument(format!("bad toxicity gate `{s}` (use p75 or 0.14)"));
        if let Some(p) = s.strip_prefix('p') {
            let p: f64 = p.parse().map_err(|_| bad())?;
            if !(0.0..=100.0).contains(&p) {
                return Err(bad());
            }
            Ok(ToxGate::Percentile(p))
        } else {
            let v: f64 = s.parse().map_err(|_| bad())?;
            if !(0.0..=1.0).contains(&v) {
                return Err(bad());
            }
            Ok(ToxGate::Absolute(v))
        }
    }
}

impl fmt::Display for ToxGate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ToxGate::Percentile(p) => write!(f, "p{p}"),
            ToxGate::Absolute(v) => write!(f, "{v}"),
        }
    }
}

impl ToxGate {
    pub fn threshold(&self, aggregates: &[TopicAggregate]) -> Option<f64> {
        match *self {
            ToxGate::Absolute(v) => Some(v),
            ToxGate::Percentile(p) => {
                let mut meds: Vec<f64> = aggregates.iter().filter_map(|a| a.median_toxicity).collect();
                meds.sort_by(f64::total_cmp);
                percentile_sorted(&meds, p / 100.0)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Designation {
    OnMission,
    NotOnMission,
}

impl Designation {
    pub fn is_on_mission(self) -> bool {
        self == Designation::OnMission
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Evidence {
    pub cluster_size: usize,
    pub topic_median_tox: Option<f64>,
    pub friend_overlap: Option<f64>,
    pub shared_retweet_ratio: Option<f64>,
    pub top3_gaps: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionDesignation {
    pub profile_id: String,
    pub label: Designation,
    /// Topic label of the cluster, set only for clusters of at least `min_cluster`.
    pub cluster_id: Option<usize>,
    pub evidence: Evidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub topic: usize,
    pub category: Category,
    pub members: Vec<String>,
    pub median_toxicity: Option<f64>,
    pub on_mission: bool,
    #[serde(default)]
    pub friend_overlap: Option<f64>,
    #[serde(default)]
    pub shared_retweet_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub threshold: Option<f64>,
    pub min_cluster: usize,
    /// Largest first, ties by topic index.
    pub clusters: Vec<Cluster>,
    /// Sorted by profile id.
    pub designations: Vec<MissionDesignation>,
}

impl Detection {
    pub fn on_mission_count(&self) -> usize {
        self.designations.iter().filter(|d| d.label.is_on_mission()).count()
    }

    pub fn designation(&self, profile_id: &str) -> Option<&MissionDesignation> {
        self.designations
            .binary_search_by(|d| d.profile_id.as_str().cmp(profile_id))
            .ok()
            .map(|i| &self.designations[i])
    }
}

/// Groups profiles by topic label; a cluster is on-mission when it has at
/// least `min_cluster` members and its topic's median toxicity clears the gate.
pub fn detect_clusters(
    labels: &[TopicLabelAssignment],
    aggregates: &[TopicAggregate],
    min_cluster: usize,
    gate: ToxGate,
) -> Result<Detection> {
    if labels.is_empty() {
        return Err(Error::EmptyInput("no labelled profiles in group"));
    }
    let threshold = gate.threshold(aggregates);
    let mut by_topic: BTreeMap<usize, Vec<&TopicLabelAssignment>> = BTreeMap::new();
    for l in labels {
        by_topic.entry(l.topic_label).or_default().push(l);
    }
    let mut clusters = Vec::new();
    let mut designations = Vec::new();
    for (topic, members) in by_topic {
        let tox = aggregates.get(topic).and_then(|a| a.median_toxicity);
        let big_enough = members.len() >= min_cluster;
        let on_mission = big_enough && matches!((tox, threshold), (Some(t), Some(th)) if t >= th);
        let mut ids: Vec<String> = members.iter().map(|m| m.profile_id.clone()).collect();
        ids.sort();
        for id in &ids {
            designations.push(MissionDesignation {
                profile_id: id.clone(),
                label: if on_mission {
                    Designation::OnMission
                } else {
                    Designation::NotOnMission
                },
                cluster_id: big_enough.then_some(topic),
                evidence: Evidence {
                    cluster_size: ids.len(),
                    topic_median_tox: tox,
                    ..Evidence::default()
                },
            });
        }
        clusters.push(Cluster {
            topic,
            category: members[0].label_category,
            members: ids,
            median_toxicity: tox,
            on_mission,
            friend_overlap: None,
            shared_retweet_ratio: None,
        });
    }
    clusters.sort_by(|a, b| b.members.len().cmp(&a.members.len()).then(a.topic.cmp(&b.topic)));
    designations.sort_by(|a, b| a.profile_id.cmp(&b.profile_id));
    Ok(Detection {
        threshold,
        min_cluster,
        clusters,
        designations,
    })
}
