//! CART classification tree with Gini impurity.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeConfig {
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: Some(8),
            min_leaf: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        /// Fraction of positive training samples reaching the leaf.
        p_pos: f64,
        n: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

struct Builder<'a, R> {
    xs: &'a [Vec<f64>],
    ys: &'a [bool],
    cfg: &'a TreeConfig,
    max_features: Option<usize>,
    rng: Option<&'a mut R>,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

impl<R: Rng> Builder<'_, R> {
    fn candidate_features(&mut self, d: usize) -> Vec<usize> {
        match (self.max_features, self.rng.as_deref_mut()) {
            (Some(m), Some(rng)) if m < d => {
                let mut f = sample(rng, d, m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        }
    }

    fn best_split(&mut self, idx: &[usize]) -> Option<BestSplit> {
        let d = self.xs[idx[0]].len();
        let n = idx.len();
        let total_pos = idx.iter().filter(|&&i| self.ys[i]).count();
        let min_leaf = self.cfg.min_leaf.max(1);
        let mut best: Option<BestSplit> = None;
        let mut order = idx.to_vec();
        for f in self.candidate_features(d) {
            order.sort_by(|&a, &b| self.xs[a][f].total_cmp(&self.xs[b][f]).then(a.cmp(&b)));
            let mut left_pos = 0;
            for k in 0..n - 1 {
                if self.ys[order[k]] {
                    left_pos += 1;
                }
                let (lo, hi) = (self.xs[order[k]][f], self.xs[order[k + 1]][f]);
                let n_left = k + 1;
                if lo == hi || n_left < min_leaf || n - n_left < min_leaf {
                    continue;
                }
                let imp = (n_left as f64 * gini(left_pos, n_left)
                    + (n - n_left) as f64 * gini(total_pos - left_pos, n - n_left))
                    / n as f64;
                if best.as_ref().is_none_or(|b| imp < b.impurity - 1e-15) {
                    best = Some(BestSplit {
                        feature: f,
                        threshold: lo + (hi - lo) / 2.0,
                        impurity: imp,
                    });
                }
            }
        }
        best
    }

    fn build(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let n = idx.len();
        let pos = idx.iter().filter(|&&i| self.ys[i]).count();
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            p_pos: pos as f64 / n as f64,
            n,
        });
        let depth_ok = self.cfg.max_depth.is_none_or(|m| depth < m);
        if pos == 0 || pos == n || !depth_ok || n < 2 * self.cfg.min_leaf.max(1) {
            return id;
        }
        let Some(split) = self.best_split(&idx) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .into_iter()
            .partition(|&i| self.xs[i][split.feature] <= split.threshold);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

impl DecisionTree {
    pub fn train(xs: &[Vec<f64>], ys: &[bool], cfg: &TreeConfig) -> Result<Self> {
        Self::train_inner::<rand_chacha::ChaCha8Rng>(xs, ys, cfg, None, None)
    }

    /// Variant used by forests: `max_features` candidates drawn per split.
    pub fn train_subspace<R: Rng>(
        xs: &[Vec<f64>],
        ys: &[bool],
        cfg: &TreeConfig,
        max_features: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Self::train_inner(xs, ys, cfg, Some(max_features), Some(rng))
    }

    fn train_inner<R: Rng>(
        xs: &[Vec<f64>],
        ys: &[bool],
        cfg: &TreeConfig,
        max_features: Option<usize>,
        rng: Option<&mut R>,
    ) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::EmptyInput("tree training set"));
        }
        if ys.iter().all(|y| *y) || ys.iter().all(|y| !*y) {
            return Err(Error::SingleClass);
        }
        let mut b = Builder {
            xs,
            ys,
            cfg,
            max_features,
            rng,
            nodes: Vec::new(),
        };
        b.build((0..xs.len()).collect(), 0);
        Ok(Self { nodes: b.nodes })
    }

    pub fn p_pos(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { p_pos, .. } => return *p_pos,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        self.p_pos(x) - 0.5
    }

    pub fn predict(&self, x: &[f64]) -> bool {
        self.decision(x) > 0.0
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn accuracy(t: &DecisionTree, xs: &[Vec<f64>], ys: &[bool]) -> f64 {
        xs.iter().zip(ys).filter(|(x, y)| t.predict(x) == **y).count() as f64 / xs.len() as f64
    }

    #[test]
    fn xor_depth_two() {
        let xs = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        let ys = vec![false, false, true, true];
        let cfg = TreeConfig { max_depth: Some(2), min_leaf: 1 };
        let t = DecisionTree::train(&xs, &ys, &cfg).unwrap();
        assert_eq!(accuracy(&t, &xs, &ys), 1.0);
        assert_eq!(t.depth(), 2);
    }

    #[test]
    fn unbounded_tree_memorizes_distinct_points() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let xs: Vec<Vec<f64>> = (0..60).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
            let mut ys: Vec<bool> = (0..60).map(|_| rng.random_bool(0.5)).collect();
            ys[0] = true;
            ys[1] = false;
            let cfg = TreeConfig { max_depth: None, min_leaf: 1 };
            let t = DecisionTree::train(&xs, &ys, &cfg).unwrap();
            assert_eq!(accuracy(&t, &xs, &ys), 1.0);
        }
    }

    #[test]
    fn respects_depth_and_leaf_limits() {
        let xs: Vec<Vec<f64>> = (0..32).map(|i| vec![i as f64]).collect();
        let ys: Vec<bool> = (0..32).map(|i| i % 2 == 0).collect();
        let t = DecisionTree::train(&xs, &ys, &TreeConfig::default()).unwrap();
        assert!(t.depth() <= 8);
        for n in &t.nodes {
            if let Node::Leaf { n, .. } = n {
                assert!(*n >= 2);
            }
        }
    }
}
