use serde::{Deserialize, Serialize};

/// Confusion counts with on-mission as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_predictions(predicted: &[bool], actual: &[bool]) -> Self {
        let mut c = Confusion::default();
        for (p, a) in predicted.iter().zip(actual) {
            match (p, a) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// `2TP / (2TP + FP + FN)`; 0 when there are no positives at all.
    pub fn f1(&self) -> f64 {
        let d = 2 * self.tp + self.fp + self.fn_;
        if d == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / d as f64
        }
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            (self.tp + self.tn) as f64 / self.total() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub f1: f64,
    pub accuracy: f64,
}

impl From<Confusion> for EvalReport {
    fn from(c: Confusion) -> Self {
        Self {
            tp: c.tp,
            tn: c.tn,
            fp: c.fp,
            fn_: c.fn_,
            f1: c.f1(),
            accuracy: c.accuracy(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formulas() {
        let c = Confusion { tp: 3, tn: 4, fp: 1, fn_: 2 };
        assert!((c.f1() - 6.0 / 9.0).abs() < 1e-12);
        assert!((c.f1() - 0.667).abs() < 1e-3);
        assert!((c.accuracy() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn perfect_and_all_positive() {
        let y = [true, false, true, false];
        let c = Confusion::from_predictions(&y, &y);
        assert_eq!((c.f1(), c.accuracy()), (1.0, 1.0));
        let c = Confusion::from_predictions(&[true; 4], &y);
        assert_eq!(c.accuracy(), 0.5);
        assert!((c.f1() - 2.0 / 3.0).abs() < 1e-12);
    }
}
