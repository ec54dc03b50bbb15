use std::collections::BTreeMap;

pub const SECONDS_PER_DAY: i64 = 86_400;
pub const MIN_BURST_EVENTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Burstiness {
    /// Finite-size normalized burstiness in [-1, 1].
    pub b: f64,
    /// Coefficient of variation of inter-event times (population std / mean).
    pub r: f64,
    pub n_events: usize,
}

/// Normalized burstiness of `n` events with inter-event CV `r`.
pub fn normalized_burstiness(r: f64, n: usize) -> f64 {
    let a = ((n + 1) as f64).sqrt();
    let c = ((n - 1) as f64).sqrt();
    let b = (a * r - c) / ((a - 2.0) * r + c);
    b.clamp(-1.0, 1.0)
}

/// `None` with fewer than three events or when every timestamp coincides.
pub fn burstiness(timestamps: &[i64]) -> Option<Burstiness> {
    let n = timestamps.len();
    if n < MIN_BURST_EVENTS {
        return None;
    }
    let taus: Vec<f64> = timestamps.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
    let m = taus.len() as f64;
    let mean = taus.iter().sum::<f64>() / m;
    if mean <= 0.0 {
        return None;
    }
    let var = taus.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / m;
    let r = var.sqrt() / mean;
    Some(Burstiness {
        b: normalized_burstiness(r, n),
        r,
        n_events: n,
    })
}

/// Counts of whole-day gaps between consecutive timestamps.
pub fn time_delta_histogram(timestamps: &[i64]) -> BTreeMap<i64, usize> {
    let mut hist = BTreeMap::new();
    for w in timestamps.windows(2) {
        *hist.entry((w[1] - w[0]).div_euclid(SECONDS_PER_DAY)).or_insert(0) += 1;
    }
    hist
}

pub fn median_delta_days(timestamps: &[i64]) -> Option<f64> {
    let deltas: Vec<f64> = timestamps
        .windows(2)
        .map(|w| (w[1] - w[0]) as f64 / SECONDS_PER_DAY as f64)
        .collect();
    crate::stats::median(&deltas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn periodic_is_minus_one() {
        let ts: Vec<i64> = (0..50).map(|i| 1000 + i * 3600).collect();
        let b = burstiness(&ts).unwrap();
        assert_eq!(b.r, 0.0);
        assert!((b.b + 1.0).abs() < 1e-9);
    }

    #[test]
    fn formula_point() {
        let expected = (11f64.sqrt() - 3.0) / ((11f64.sqrt() - 2.0) + 3.0);
        assert!((normalized_burstiness(1.0, 10) - expected).abs() < 1e-15);
        assert!((normalized_burstiness(1.0, 10) - 0.0733).abs() < 1e-4);
    }

    #[test]
    fn too_few_or_degenerate() {
        assert!(burstiness(&[1, 2]).is_none());
        assert!(burstiness(&[5, 5, 5, 5]).is_none());
    }

    #[test]
    fn monotone_in_r() {
        for n in [3usize, 4, 10, 100, 3200] {
            let mut prev = f64::NEG_INFINITY;
            for i in 0..200 {
                let r = i as f64 * 0.05;
                let b = normalized_burstiness(r, n);
                if b < 1.0 {
                    assert!(b > prev, "n={n} r={r}");
                }
                prev = b;
            }
        }
    }

    #[test]
    fn bounded_on_fuzz() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..2000 {
            let n = rng.random_range(3..60);
            let mut t = 1i64;
            let ts: Vec<i64> = (0..n)
                .map(|_| {
                    t += if rng.random_bool(0.2) { rng.random_range(0..1_000_000) } else { rng.random_range(0..10) };
                    t
                })
                .collect();
            if let Some(b) = burstiness(&ts) {
                assert!((-1.0..=1.0).contains(&b.b));
            }
        }
    }

    #[test]
    fn histograms() {
        assert_eq!(time_delta_histogram(&[0, 100]), BTreeMap::from([(0, 1)]));
        let d = SECONDS_PER_DAY;
        assert_eq!(time_delta_histogram(&[d, d, 3 * d]), BTreeMap::from([(0, 1), (2, 1)]));
        let daily: Vec<i64> = (0..366).map(|i| i * d).collect();
        assert_eq!(time_delta_histogram(&daily), BTreeMap::from([(1, 365)]));
        assert_eq!(median_delta_days(&daily), Some(1.0));
        assert_eq!(median_delta_days(&[1]), None);
    }
}
