use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub kappa: f64,
    pub n_items: usize,
    pub n_raters: usize,
    pub n_categories: usize,
}

/// Fleiss' kappa over an items × raters matrix of category indices.
pub fn fleiss_kappa(ratings: &[Vec<usize>]) -> Result<AgreementReport> {
    let n_items = ratings.len();
    if n_items == 0 {
        return Err(Error::EmptyInput("no rated items"));
    }
    let n_raters = ratings[0].len();
    if n_raters < 2 {
        return Err(Error::InvalidArgument("fleiss kappa needs at least 2 raters".into()));
    }
    if let Some(i) = ratings.iter().position(|r| r.len() != n_raters) {
        return Err(Error::InvalidRow {
            row: i + 1,
            message: format!("expected {n_raters} ratings, found {}", ratings[i].len()),
        });
    }
    let n_categories = ratings.iter().flatten().max().map_or(0, |m| m + 1);
    let n = n_raters as f64;
    let mut totals = vec![0.0f64; n_categories];
    let mut p_bar = 0.0;
    for row in ratings {
        let mut counts = vec![0.0f64; n_categories];
        for &c in row {
            counts[c] += 1.0;
        }
        let agree: f64 = counts.iter().map(|x| x * x).sum::<f64>() - n;
        p_bar += agree / (n * (n - 1.0));
        for (t, c) in totals.iter_mut().zip(&counts) {
            *t += c;
        }
    }
    p_bar /= n_items as f64;
    let grand = n_items as f64 * n;
    let p_e: f64 = totals.iter().map(|t| (t / grand).powi(2)).sum();
    let kappa = if (1.0 - p_e).abs() < 1e-15 {
        // every rating fell in one category: agreement is perfect
        1.0
    } else {
        (p_bar - p_e) / (1.0 - p_e)
    };
    Ok(AgreementReport {
        kappa,
        n_items,
        n_raters,
        n_categories,
    })
}

/// Parses a ratings CSV: one item per row, one rater per column, category
/// labels as free text. Lines starting with `#` are skipped.
pub fn parse_ratings_csv(text: &str) -> Result<(Vec<Vec<usize>>, Vec<String>)> {
    let mut labels: Vec<String> = Vec::new();
    let mut rows = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|cell| {
                let cell = cell.trim().to_string();
                match labels.iter().position(|l| *l == cell) {
                    Some(i) => i,
                    None => {
                        labels.push(cell);
                        labels.len() - 1
                    }
                }
            })
            .collect();
        rows.push(row);
    }
    Ok((rows, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn unanimous_is_one() {
        let m: Vec<Vec<usize>> = (0..10).map(|i| vec![i % 3; 3]).collect();
        assert_eq!(fleiss_kappa(&m).unwrap().kappa, 1.0);
        let one_cat = vec![vec![0; 4]; 5];
        assert_eq!(fleiss_kappa(&one_cat).unwrap().kappa, 1.0);
    }

    #[test]
    fn hand_worked_matrix() {
        // per-item agreement 1, 1/3, 1, 1/3 -> P = 2/3; marginals 0.5/0.5 -> Pe = 1/2
        let m = vec![vec![0, 0, 0], vec![0, 0, 1], vec![1, 1, 1], vec![0, 1, 1]];
        let r = fleiss_kappa(&m).unwrap();
        assert!((r.kappa - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!((r.n_items, r.n_raters, r.n_categories), (4, 3, 2));
    }

    #[test]
    fn random_raters_near_zero() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let m: Vec<Vec<usize>> = (0..10_000)
            .map(|_| vec![rng.random_range(0..2), rng.random_range(0..2)])
            .collect();
        let k = fleiss_kappa(&m).unwrap().kappa;
        assert!(k.abs() < 0.05, "kappa {k}");
    }

    #[test]
    fn errors() {
        assert!(fleiss_kappa(&[]).is_err());
        assert!(fleiss_kappa(&[vec![0]]).is_err());
        assert!(fleiss_kappa(&[vec![0, 1], vec![0]]).is_err());
    }

    #[test]
    fn csv_labels() {
        let (rows, labels) = parse_ratings_csv("on,on,off\n# note\noff,off,off\n").unwrap();
        assert_eq!(rows, vec![vec![0, 0, 1], vec![1, 1, 1]]);
        assert_eq!(labels, vec!["on", "off"]);
    }
}
