use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-feature min-max scaler learned on a training matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyInput("scaler training matrix"))?;
        let mut min = first.clone();
        let mut max = first.clone();
        for r in &rows[1..] {
            if r.len() != min.len() {
                return Err(Error::InvalidArgument("ragged feature matrix".into()));
            }
            for (j, v) in r.iter().enumerate() {
                min[j] = min[j].min(*v);
                max[j] = max[j].max(*v);
            }
        }
        Ok(Self { min, max })
    }

    /// Maps into [0, 1], clipping values outside the training range.
    /// Constant features map to 0.
    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(x, (lo, hi))| {
                let span = hi - lo;
                if span > 0.0 {
                    ((x - lo) / span).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn transform(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.transform_row(r)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|x| vec![*x]).collect()
    }

    #[test]
    fn scaling_rules() {
        let s = MinMaxScaler::fit(&col(&[0.0, 5.0, 10.0])).unwrap();
        assert_eq!(s.transform(&col(&[0.0, 5.0, 10.0])), col(&[0.0, 0.5, 1.0]));
        assert_eq!(s.transform_row(&[20.0]), vec![1.0]);
        assert_eq!(s.transform_row(&[-3.0]), vec![0.0]);
        let c = MinMaxScaler::fit(&col(&[7.0, 7.0])).unwrap();
        assert_eq!(c.transform(&col(&[7.0, 7.0])), col(&[0.0, 0.0]));
        assert!(MinMaxScaler::fit(&[]).is_err());
    }
}
