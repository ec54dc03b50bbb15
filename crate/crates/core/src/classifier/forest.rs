use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, TreeConfig};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub tree: TreeConfig,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            tree: TreeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
}

impl RandomForest {
    /// Bootstrap-sampled trees with `round(√F)` candidate features per split.
    /// Trees train in parallel, each from its own derived seed.
    pub fn train(xs: &[Vec<f64>], ys: &[bool], cfg: &ForestConfig, seed: u64) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::EmptyInput("forest training set"));
        }
        if ys.iter().all(|y| *y) || ys.iter().all(|y| !*y) {
            return Err(Error::SingleClass);
        }
        let d = xs[0].len();
        let max_features = ((d as f64).sqrt().round() as usize).clamp(1, d.max(1));
        let n = xs.len();
        let trees = (0..cfg.n_trees)
            .into_par_iter()
            .map(|i| {
                let mut rng = seed::rng(seed, "forest", i as u64);
                // redraw until the bootstrap holds both classes
                let (bx, by) = loop {
                    let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                    let by: Vec<bool> = idx.iter().map(|&j| ys[j]).collect();
                    if by.contains(&true) && by.contains(&false) {
                        break (idx.iter().map(|&j| xs[j].clone()).collect::<Vec<_>>(), by);
                    }
                };
                DecisionTree::train_subspace(&bx, &by, &cfg.tree, max_features, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { trees })
    }

    pub fn p_pos(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.p_pos(x)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        self.p_pos(x) - 0.5
    }

    pub fn predict(&self, x: &[f64]) -> bool {
        self.decision(x) > 0.0
    }
}
