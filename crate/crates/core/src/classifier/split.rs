use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed;

pub const TEST_FRACTION: f64 = 0.2;
pub const MIN_EXAMPLES: usize = 5;

/// Index sets of an 80/20 split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Deterministic 80/20 split of `labels` indices. Stratified splits take 20%
/// of each class (rounded) for test while keeping at least one per class in train.
pub fn split_80_20(labels: &[bool], seed: u64, stratified: bool) -> Result<Split> {
    if labels.len() < MIN_EXAMPLES {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_EXAMPLES} labelled examples, got {}",
            labels.len()
        )));
    }
    let mut rng = seed::rng(seed, "split", 0);
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut take = |mut idx: Vec<usize>, rng: &mut rand_chacha::ChaCha8Rng| {
        idx.shuffle(rng);
        let mut n_test = (idx.len() as f64 * TEST_FRACTION).round() as usize;
        if stratified && n_test >= idx.len() {
            n_test = idx.len().saturating_sub(1);
        }
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    };
    if stratified {
        for class in [true, false] {
            let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
            take(idx, &mut rng);
        }
    } else {
        take((0..labels.len()).collect(), &mut rng);
    }
    train.sort_unstable();
    test.sort_unstable();
    for class in [true, false] {
        if labels.contains(&class) && !train.iter().any(|&i| labels[i] == class) {
            return Err(Error::ClassMissingFromTrain(class));
        }
    }
    Ok(Split { train, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_disjointness() {
        let labels: Vec<bool> = (0..100).map(|i| i % 2 == 0).collect();
        let s = split_80_20(&labels, 1, true).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (80, 20));
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        let u = split_80_20(&labels, 1, false).unwrap();
        assert_eq!((u.train.len(), u.test.len()), (80, 20));
    }

    #[test]
    fn stratified_keeps_both_classes() {
        let labels = [true, true, true, true, true, true, false, false, false, false];
        let s = split_80_20(&labels, 3, true).unwrap();
        assert!(s.train.iter().any(|&i| labels[i]));
        assert!(s.train.iter().any(|&i| !labels[i]));
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let labels: Vec<bool> = (0..50).map(|i| i % 3 == 0).collect();
        assert_eq!(split_80_20(&labels, 9, true).unwrap(), split_80_20(&labels, 9, true).unwrap());
        assert_ne!(split_80_20(&labels, 9, true).unwrap(), split_80_20(&labels, 10, true).unwrap());
    }

    #[test]
    fn too_small() {
        assert!(split_80_20(&[true, false, true, false], 1, true).is_err());
    }
}
