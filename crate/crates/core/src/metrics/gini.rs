use crate::error::{Error, Result};

/// Gini index of non-negative values, `Σᵢⱼ|xᵢ−xⱼ| / (2n²·mean)`, evaluated
/// through the sorted closed form in O(n log n). All-zero input gives 0.
pub fn gini_index(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("gini of empty list"));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidArgument(format!("gini requires finite values ≥ 0, got {v}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let total: f64 = sorted.iter().sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * (i as f64 + 1.0) - n - 1.0) * x)
        .sum();
    Ok((weighted / (n * total)).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairwise(xs: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let mut s = 0.0;
        for a in xs {
            for b in xs {
                s += (a - b).abs();
            }
        }
        s / (2.0 * n * n * mean)
    }

    #[test]
    fn examples() {
        assert_eq!(gini_index(&[0.3, 0.3, 0.3]).unwrap(), 0.0);
        assert!((gini_index(&[1.0, 2.0, 3.0, 4.0]).unwrap() - 0.25).abs() < 1e-12);
        assert!((pairwise(&[1.0, 2.0, 3.0, 4.0]) - 0.25).abs() < 1e-12);
        assert!((gini_index(&[0.0, 0.0, 0.0, 1.0]).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(gini_index(&[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(gini_index(&[0.4]).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        assert!(gini_index(&[]).is_err());
        assert!(gini_index(&[-1.0, 2.0]).is_err());
    }
}
