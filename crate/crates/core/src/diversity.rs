//! Category probability vectors, Shannon entropy and the eight entropy
//! groups (I–VIII).
//!
//! Group boundaries sit at `ln(m + 0.5)`: the entropy of a profile spread
//! uniformly over a "half" category count between `m` and `m + 1`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::ProfileTimeline;
use crate::error::{Error, Result};
use crate::topics::{Assignments, Category, TopicCatalog};

pub const N_CATEGORIES: usize = 8;
/// Slack allowed above `ln 8` for accumulated rounding.
pub const ENTROPY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    I,
    II,
    III,
    IV,
    V,
    VI,
    VII,
    VIII,
}

impl Group {
    pub const ALL: [Group; 8] = [
        Group::I,
        Group::II,
        Group::III,
        Group::IV,
        Group::V,
        Group::VI,
        Group::VII,
        Group::VIII,
    ];

    /// Approximate number of categories the group's profiles post in.
    pub fn categories(self) -> usize {
        self as usize + 1
    }

    pub fn from_categories(n: usize) -> Option<Self> {
        Group::ALL.get(n.checked_sub(1)?).copied()
    }

    pub fn name(self) -> &'static str {
        ["I", "II", "III", "IV", "V", "VI", "VII", "VIII"][self as usize]
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().trim_start_matches("group-").to_ascii_uppercase();
        Group::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown group `{s}`")))
    }
}

/// Inclusive range syntax `II..VII` (or a single group).
pub fn parse_group_range(s: &str) -> Result<Vec<Group>> {
    match s.split_once("..") {
        Some((a, b)) => {
            let (a, b): (Group, Group) = (a.parse()?, b.parse()?);
            if a > b {
                return Err(Error::InvalidArgument(format!("empty group range `{s}`")));
            }
            Ok(Group::ALL.into_iter().filter(|g| *g >= a && *g <= b).collect())
        }
        None => s.split(',').map(str::parse).collect(),
    }
}

/// Lower edges of groups II..VIII: `ln 1.5, ln 2.5, ..., ln 7.5`.
pub fn group_boundaries() -> [f64; 7] {
    std::array::from_fn(|i| (i as f64 + 1.5).ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryProbabilityVector(pub [f64; N_CATEGORIES]);

impl CategoryProbabilityVector {
    pub fn get(&self, c: Category) -> f64 {
        self.0[c.index()]
    }
}

/// Fraction of the profile's TPV-covered tweets whose dominant topic maps to
/// each category, together with the raw per-category counts.
pub fn category_counts(
    timeline: &ProfileTimeline,
    catalog: &TopicCatalog,
    assignments: &Assignments,
) -> [usize; N_CATEGORIES] {
    let mut counts = [0usize; N_CATEGORIES];
    for t in &timeline.tweets {
        if let Some(&topic) = assignments.get(&t.tweet_id) {
            counts[catalog.category(topic).index()] += 1;
        }
    }
    counts
}

pub fn category_probability(
    timeline: &ProfileTimeline,
    catalog: &TopicCatalog,
    assignments: &Assignments,
) -> Result<CategoryProbabilityVector> {
    cpv_from_counts(&category_counts(timeline, catalog, assignments))
}

pub fn cpv_from_counts(counts: &[usize; N_CATEGORIES]) -> Result<CategoryProbabilityVector> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptyInput("profile has no topic-covered tweets"));
    }
    Ok(CategoryProbabilityVector(counts.map(|c| c as f64 / total as f64)))
}

/// Natural-log Shannon entropy with `0 ln 0 = 0`.
pub fn shannon_entropy(p: &[f64]) -> f64 {
    let h: f64 = p.iter().filter(|x| **x > 0.0).map(|x| -x * x.ln()).sum();
    h.max(0.0)
}

/// Left-closed, right-open bins; the top bin also holds `ln 8` exactly.
pub fn assign_group(entropy: f64) -> Result<Group> {
    let max = (N_CATEGORIES as f64).ln() + ENTROPY_TOLERANCE;
    if !(0.0..=max).contains(&entropy) {
        return Err(Error::EntropyOutOfRange(entropy));
    }
    let edges = group_boundaries();
    let idx = edges.partition_point(|edge| *edge <= entropy);
    Ok(Group::ALL[idx])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityProfile {
    pub profile_id: String,
    pub cpv: CategoryProbabilityVector,
    pub category_counts: [usize; N_CATEGORIES],
    pub entropy: f64,
    pub group: Group,
}

pub fn diversity_profile(
    timeline: &ProfileTimeline,
    catalog: &TopicCatalog,
    assignments: &Assignments,
) -> Result<DiversityProfile> {
    let counts = category_counts(timeline, catalog, assignments);
    let cpv = cpv_from_counts(&counts)?;
    let entropy = shannon_entropy(&cpv.0);
    Ok(DiversityProfile {
        profile_id: timeline.profile_id.clone(),
        group: assign_group(entropy)?,
        cpv,
        category_counts: counts,
        entropy,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupPartition {
    pub groups: BTreeMap<Group, Vec<String>>,
}

impl GroupPartition {
    pub fn size(&self, g: Group) -> usize {
        self.groups.get(&g).map_or(0, Vec::len)
    }

    pub fn total(&self) -> usize {
        self.groups.values().map(Vec::len).sum()
    }

    pub fn group_of(&self, profile_id: &str) -> Option<Group> {
        self.groups
            .iter()
            .find(|(_, ids)| ids.binary_search_by(|p| p.as_str().cmp(profile_id)).is_ok())
            .map(|(g, _)| *g)
    }
}

/// Partition plus the `(group, H)` rows for CDF plotting, sorted by group then H.
pub fn group_partition<'a>(
    profiles: impl IntoIterator<Item = &'a DiversityProfile>,
) -> (GroupPartition, Vec<(Group, f64)>) {
    let mut part = GroupPartition::default();
    let mut cdf = Vec::new();
    for p in profiles {
        part.groups.entry(p.group).or_default().push(p.profile_id.clone());
        cdf.push((p.group, p.entropy));
    }
    for ids in part.groups.values_mut() {
        ids.sort();
    }
    cdf.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    (part, cdf)
}

pub fn cdf_csv(rows: &[(Group, f64)]) -> String {
    let mut out = String::from("group,H\n");
    for (g, h) in rows {
        out.push_str(&format!("{g},{h}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_util::{timeline, tweet};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn brute_force_group(h: f64) -> Group {
        // Linear scan over the literal constants.
        let edges = [1.5f64, 2.5, 3.5, 4.5, 5.5, 6.5, 7.5].map(f64::ln);
        let mut n = 1;
        for e in edges {
            if h >= e {
                n += 1;
            }
        }
        Group::from_categories(n).unwrap()
    }

    #[test]
    fn cpv_arithmetic() {
        let cat = TopicCatalog::cyclic(8);
        let mut asg = Assignments::new();
        let mut tweets = Vec::new();
        for i in 0..10 {
            let id = format!("t{i}");
            tweets.push(tweet(&id, "x", i + 1, false));
            // politics = topic 3, everyday = topic 0
            asg.insert(id, if i < 4 { 3 } else { 0 });
        }
        let cpv = category_probability(&timeline(tweets), &cat, &asg).unwrap();
        assert!((cpv.get(Category::Politics) - 0.4).abs() < 1e-12);
        assert!((cpv.get(Category::Everyday) - 0.6).abs() < 1e-12);
        assert!((cpv.0.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cpv_uniform_and_one_hot() {
        assert_eq!(cpv_from_counts(&[1; 8]).unwrap().0, [0.125; 8]);
        let one = cpv_from_counts(&[0, 0, 5, 0, 0, 0, 0, 0]).unwrap();
        assert_eq!(one.0[2], 1.0);
        assert!(cpv_from_counts(&[0; 8]).is_err());
    }

    #[test]
    fn entropy_values() {
        let h = shannon_entropy(&[0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!((h - 2f64.ln()).abs() < 1e-12);
        assert_eq!(format!("{h:.4}"), "0.6931");
        assert_eq!(shannon_entropy(&[1.0, 0.0, 0.0]), 0.0);
        assert!((shannon_entropy(&[0.25; 4]) - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn paper_group_examples() {
        assert_eq!(assign_group(0.69).unwrap(), Group::II);
        assert_eq!(assign_group(2.5f64.ln()).unwrap(), Group::III);
        assert_eq!(assign_group(0.91).unwrap(), Group::II);
        assert_eq!(assign_group(0.92).unwrap(), Group::III);
        assert_eq!(assign_group(8f64.ln()).unwrap(), Group::VIII);
        assert_eq!(assign_group(0.0).unwrap(), Group::I);
        assert!(assign_group(-0.01).is_err());
        assert!(assign_group(2.1).is_err());
    }

    #[test]
    fn partition_fixture() {
        let mk = |id: &str, h: f64| DiversityProfile {
            profile_id: id.into(),
            cpv: CategoryProbabilityVector([0.125; 8]),
            category_counts: [1; 8],
            entropy: h,
            group: assign_group(h).unwrap(),
        };
        let ps = [mk("a", 0.0), mk("b", 0.69), mk("c", 2.0)];
        let (part, cdf) = group_partition(&ps);
        assert_eq!(part.size(Group::I), 1);
        assert_eq!(part.size(Group::II), 1);
        assert_eq!(part.size(Group::VII), 1);
        assert_eq!(part.group_of("c"), Some(Group::VII));
        assert_eq!(cdf.len(), 3);
        assert!(group_partition(std::iter::empty()).0.groups.is_empty());
    }

    #[test]
    fn assign_group_matches_linear_scan() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100_000 {
            let h = rng.random_range(0.0..=8f64.ln());
            assert_eq!(assign_group(h).unwrap(), brute_force_group(h), "H = {h}");
        }
        for e in group_boundaries() {
            assert_eq!(assign_group(e).unwrap(), brute_force_group(e));
        }
    }

    #[test]
    fn random_partition_covers_all() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let ps: Vec<DiversityProfile> = (0..10_000)
            .map(|i| {
                let counts: [usize; 8] = std::array::from_fn(|_| rng.random_range(0..5));
                let mut counts = counts;
                counts[0] += 1;
                let cpv = cpv_from_counts(&counts).unwrap();
                let h = shannon_entropy(&cpv.0);
                DiversityProfile {
                    profile_id: format!("p{i:05}"),
                    group: assign_group(h).unwrap(),
                    cpv,
                    category_counts: counts,
                    entropy: h,
                }
            })
            .collect();
        let (part, _) = group_partition(&ps);
        assert_eq!(part.total(), 10_000);
        for p in &ps {
            let nonzero = p.cpv.0.iter().filter(|x| **x > 0.0).count() as f64;
            assert!(p.entropy <= nonzero.ln() + 1e-12);
        }
    }

    #[test]
    fn group_parsing() {
        assert_eq!(parse_group_range("II..VII").unwrap().len(), 6);
        assert_eq!(parse_group_range("viii").unwrap(), vec![Group::VIII]);
        assert!(parse_group_range("VII..II").is_err());
    }

    proptest! {
        #[test]
        fn entropy_permutation_invariant(mut v in proptest::collection::vec(0.0f64..1.0, 8), seed in 0u64..1000) {
            let s: f64 = v.iter().sum();
            prop_assume!(s > 0.0);
            v.iter_mut().for_each(|x| *x /= s);
            let mut w = v.clone();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            use rand::seq::SliceRandom;
            w.shuffle(&mut rng);
            prop_assert!((shannon_entropy(&v) - shannon_entropy(&w)).abs() < 1e-12);
        }
    }
}
