use std::collections::{BTreeMap, BTreeSet};

use crate::corpus::ProfileMetadata;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OverlapEvidence {
    /// Fraction of member pairs where either lists the other as a friend.
    pub friend_overlap: Option<f64>,
    /// Fraction of members sharing at least one retweeted id with another member.
    pub shared_retweet_ratio: Option<f64>,
    /// Common-friend count per member pair, in pair order.
    pub shared_friend_counts: Vec<usize>,
}

/// Network and retweet overlap within a cluster. Fields are `None` when no
/// member carries the corresponding data.
pub fn overlap_evidence(members: &[(&str, &ProfileMetadata)]) -> OverlapEvidence {
    let friends: BTreeMap<&str, BTreeSet<&str>> = members
        .iter()
        .filter_map(|(id, m)| {
            m.friends_ids
                .as_ref()
                .map(|f| (*id, f.iter().map(String::as_str).collect()))
        })
        .collect();
    let mut out = OverlapEvidence::default();

    if !friends.is_empty() && members.len() >= 2 {
        let mut linked = 0usize;
        let mut pairs = 0usize;
        for (i, (a, _)) in members.iter().enumerate() {
            for (b, _) in &members[i + 1..] {
                pairs += 1;
                let fa = friends.get(a);
                let fb = friends.get(b);
                if fa.is_some_and(|f| f.contains(b)) || fb.is_some_and(|f| f.contains(a)) {
                    linked += 1;
                }
                out.shared_friend_counts.push(match (fa, fb) {
                    (Some(x), Some(y)) => x.intersection(y).count(),
                    _ => 0,
                });
            }
        }
        out.friend_overlap = Some(linked as f64 / pairs as f64);
    }

    let retweets: Vec<Option<BTreeSet<&str>>> = members
        .iter()
        .map(|(_, m)| {
            m.retweeted_ids
                .as_ref()
                .map(|r| r.iter().map(String::as_str).collect())
        })
        .collect();
    if retweets.iter().any(Option::is_some) {
        let sharing = retweets
            .iter()
            .enumerate()
            .filter(|(i, mine)| {
                mine.as_ref().is_some_and(|mine| {
                    retweets.iter().enumerate().any(|(j, other)| {
                        j != *i && other.as_ref().is_some_and(|o| !mine.is_disjoint(o))
                    })
                })
            })
            .count();
        out.shared_retweet_ratio = Some(sharing as f64 / members.len() as f64);
    }
    out
}

/// Gaps between the three largest entries, sorted descending. Needs at least
/// three nonzero entries.
pub fn top3_gap(values: &[f64]) -> Option<(f64, f64)> {
    let mut nz: Vec<f64> = values.iter().copied().filter(|v| *v > 0.0).collect();
    if nz.len() < 3 {
        return None;
    }
    nz.sort_by(|a, b| b.total_cmp(a));
    Some((nz[0] - nz[1], nz[1] - nz[2]))
}
