//! Linear soft-margin SVM trained by full-batch subgradient descent on the
//! primal: `½‖w‖² + C Σ max(0, 1 − yᵢ(w·xᵢ + b))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    pub c: f64,
    pub epochs: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self { c: 1.0, epochs: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    pub weights: Vec<f64>,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmTrace {
    /// Objective (divided by n) of the returned model after each epoch.
    pub objective: Vec<f64>,
    pub initial: f64,
}

fn sign(y: bool) -> f64 {
    if y {
        1.0
    } else {
        -1.0
    }
}

impl LinearSvm {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    pub fn predict(&self, x: &[f64]) -> bool {
        self.decision(x) > 0.0
    }

    /// `λ/2 ‖w‖² + mean hinge` with `λ = 1 / (C n)`; equals the primal over `C n`.
    pub fn objective(&self, xs: &[Vec<f64>], ys: &[bool], lambda: f64) -> f64 {
        let hinge: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| (1.0 - sign(*y) * self.decision(x)).max(0.0))
            .sum::<f64>()
            / xs.len() as f64;
        0.5 * lambda * self.weights.iter().map(|w| w * w).sum::<f64>() + hinge
    }

    /// Step size `1/(λ t)` per epoch; the best iterate seen is returned, so
    /// the reported objective never rises above the all-zero start.
    pub fn train(xs: &[Vec<f64>], ys: &[bool], cfg: &SvmConfig) -> Result<(Self, SvmTrace)> {
        let n = xs.len();
        if n == 0 {
            return Err(Error::EmptyInput("svm training set"));
        }
        if ys.iter().all(|y| *y) || ys.iter().all(|y| !*y) {
            return Err(Error::SingleClass);
        }
        if cfg.c <= 0.0 || cfg.epochs == 0 {
            return Err(Error::InvalidArgument("svm needs C > 0 and at least one epoch".into()));
        }
        let d = xs[0].len();
        let lambda = 1.0 / (cfg.c * n as f64);
        let mut cur = LinearSvm {
            weights: vec![0.0; d],
            bias: 0.0,
        };
        let initial = cur.objective(xs, ys, lambda);
        let mut best = cur.clone();
        let mut best_obj = initial;
        let mut objective = Vec::with_capacity(cfg.epochs);
        let mut grad_w = vec![0.0; d];
        for t in 1..=cfg.epochs {
            let eta = 1.0 / (lambda * t as f64);
            grad_w.iter_mut().for_each(|g| *g = 0.0);
            let mut grad_b = 0.0;
            for (x, y) in xs.iter().zip(ys) {
                let s = sign(*y);
                if s * cur.decision(x) < 1.0 {
                    for (g, v) in grad_w.iter_mut().zip(x) {
                        *g -= s * v;
                    }
                    grad_b -= s;
                }
            }
            let inv_n = 1.0 / n as f64;
            for (w, g) in cur.weights.iter_mut().zip(&grad_w) {
                *w -= eta * (lambda * *w + g * inv_n);
            }
            cur.bias -= eta * grad_b * inv_n;
            // projection onto the ball of radius 1/√λ that holds the optimum
            let norm = cur.weights.iter().map(|w| w * w).sum::<f64>().sqrt();
            let radius = 1.0 / lambda.sqrt();
            if norm > radius {
                let s = radius / norm;
                cur.weights.iter_mut().for_each(|w| *w *= s);
            }
            let obj = cur.objective(xs, ys, lambda);
            if obj < best_obj {
                best_obj = obj;
                best = cur.clone();
            }
            objective.push(best_obj);
        }
        Ok((best, SvmTrace { objective, initial }))
    }
}
