//! Random forest of CART trees split on Gini impurity.

use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Matrix;
use crate::error::{Error, Result};
use crate::rng::{child_rng, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features examined per split; `None` means `⌈√m⌉`.
    pub max_features: Option<usize>,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_features: None,
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf {
        proba: Vec<f64>,
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
    nodes: Vec<Node>,
}

impl DecisionTree {
    fn leaf_proba(&self, x: &[f64]) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { proba } => return proba,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }
}

struct TreeBuilder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    n_classes: usize,
    max_features: usize,
    params: &'a ForestParams,
    nodes: Vec<Node>,
}

fn gini(counts: &[f64], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|c| (c / total).powi(2)).sum::<f64>()
}

impl TreeBuilder<'_> {
    fn leaf(&mut self, idx: &[usize]) -> usize {
        let mut proba = vec![0.0; self.n_classes];
        for &i in idx {
            proba[self.y[i]] += 1.0;
        }
        let total = idx.len() as f64;
        proba.iter_mut().for_each(|p| *p /= total);
        self.nodes.push(Node::Leaf { proba });
        self.nodes.len() - 1
    }

    fn build(&mut self, idx: &mut [usize], depth: usize, rng: &mut Rng) -> usize {
        let n = idx.len();
        let first = self.y[idx[0]];
        let pure = idx.iter().all(|&i| self.y[i] == first);
        let depth_capped = self.params.max_depth.is_some_and(|d| depth >= d);
        if pure
            || depth_capped
            || n < self.params.min_samples_split
            || n < 2 * self.params.min_samples_leaf
        {
            return self.leaf(idx);
        }
        let Some((feature, threshold)) = self.best_split(idx, rng) else {
            return self.leaf(idx);
        };
        let mut split = 0;
        for pos in 0..n {
            if self.x[idx[pos]][feature] <= threshold {
                idx.swap(pos, split);
                split += 1;
            }
        }
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { proba: Vec::new() });
        let (l, r) = idx.split_at_mut(split);
        let left = self.build(l, depth + 1, rng);
        let right = self.build(r, depth + 1, rng);
        self.nodes[at] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        at
    }

    /// Best Gini split among a random subset of features. When no sampled
    /// feature admits a split, the remaining features are tried too.
    fn best_split(&self, idx: &[usize], rng: &mut Rng) -> Option<(usize, f64)> {
        let m = self.x[0].len();
        let order: Vec<usize> = sample(rng, m, m).into_iter().collect();
        let n = idx.len() as f64;
        let mut parent = vec![0.0; self.n_classes];
        for &i in idx {
            parent[self.y[i]] += 1.0;
        }
        let parent_gini = gini(&parent, n);
        let min_leaf = self.params.min_samples_leaf;

        let mut best: Option<(f64, usize, f64)> = None;
        let mut sorted: Vec<(f64, usize)> = Vec::with_capacity(idx.len());
        for (tried, &f) in order.iter().enumerate() {
            if tried >= self.max_features && best.is_some() {
                break;
            }
            sorted.clear();
            sorted.extend(idx.iter().map(|&i| (self.x[i][f], self.y[i])));
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = vec![0.0; self.n_classes];
            let mut right = parent.clone();
            for pos in 0..sorted.len() - 1 {
                let (v, c) = sorted[pos];
                left[c] += 1.0;
                right[c] -= 1.0;
                let next = sorted[pos + 1].0;
                if next <= v {
                    continue;
                }
                let nl = (pos + 1) as f64;
                if pos + 1 < min_leaf || sorted.len() - pos - 1 < min_leaf {
                    continue;
                }
                let nr = n - nl;
                let impurity = (nl * gini(&left, nl) + nr * gini(&right, nr)) / n;
                if impurity < parent_gini - 1e-12 && best.is_none_or(|b| impurity < b.0) {
                    let mut threshold = 0.5 * (v + next);
                    if threshold >= next {
                        threshold = v;
                    }
                    best = Some((impurity, f, threshold));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

/// Bagged ensemble of Gini CART trees; probabilities are the mean of the
/// trees' leaf class frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    trees: Vec<DecisionTree>,
    n_features: usize,
    n_classes: usize,
}

impl RandomForest {
    pub fn fit(
        x: &Matrix,
        y: &[usize],
        n_classes: usize,
        params: &ForestParams,
        seed: u64,
    ) -> Result<Self> {
        let n = x.nrows();
        if n == 0 || y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: y.len(),
            });
        }
        if params.n_trees == 0 {
            return Err(Error::InvalidInput("forest needs at least one tree".into()));
        }
        let m = x.ncols();
        let rows: Vec<Vec<f64>> = (0..n).map(|i| x.row(i).iter().copied().collect()).collect();
        let max_features = params
            .max_features
            .unwrap_or_else(|| (m as f64).sqrt().ceil() as usize)
            .clamp(1, m);
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = child_rng(seed, t as u64);
                let mut idx: Vec<usize> = if params.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                let mut b = TreeBuilder {
                    x: &rows,
                    y,
                    n_classes,
                    max_features,
                    params,
                    nodes: Vec::new(),
                };
                b.build(&mut idx, 0, &mut rng);
                DecisionTree { nodes: b.nodes }
            })
            .collect();
        Ok(Self {
            trees,
            n_features: m,
            n_classes,
        })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn proba_row(&self, x: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.n_classes];
        for t in &self.trees {
            for (acc, v) in p.iter_mut().zip(t.leaf_proba(x)) {
                *acc += v;
            }
        }
        let k = self.trees.len() as f64;
        p.iter_mut().for_each(|v| *v /= k);
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Matrix, Vec<usize>) {
        let x = Matrix::from_fn(10, 2, |i, j| {
            if j == 0 {
                i as f64
            } else {
                ((i * 3) % 7) as f64
            }
        });
        let y = (0..10).map(|i| usize::from(i >= 5)).collect();
        (x, y)
    }

    #[test]
    fn pure_leaves_give_certain_predictions_on_training_rows() {
        let (x, y) = toy();
        let params = ForestParams {
            n_trees: 10,
            bootstrap: false,
            ..Default::default()
        };
        let rf = RandomForest::fit(&x, &y, 2, &params, 1).unwrap();
        for i in 0..10 {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            let p = rf.proba_row(&row);
            assert_eq!(p[y[i]], 1.0, "row {i}: {p:?}");
        }
    }

    #[test]
    fn single_tree_routes_each_row_to_a_pure_leaf() {
        let (x, y) = toy();
        let params = ForestParams {
            n_trees: 1,
            bootstrap: false,
            max_features: Some(2),
            ..Default::default()
        };
        let rf = RandomForest::fit(&x, &y, 2, &params, 3).unwrap();
        let tree = &rf.trees()[0];
        for i in 0..10 {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            let leaf = tree.leaf_proba(&row);
            assert_eq!(leaf[y[i]], 1.0);
        }
        // one threshold on feature 0 separates the classes
        assert_eq!(tree.n_leaves(), 2);
    }

    #[test]
    fn deterministic_for_a_seed() {
        let (x, y) = toy();
        let a = RandomForest::fit(&x, &y, 2, &ForestParams::default(), 4).unwrap();
        let b = RandomForest::fit(&x, &y, 2, &ForestParams::default(), 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let x = Matrix::from_fn(60, 3, |i, j| ((i * (j + 2)) % 13) as f64);
        let y: Vec<usize> = (0..60).map(|i| i % 3).collect();
        let rf = RandomForest::fit(&x, &y, 3, &ForestParams::default(), 0).unwrap();
        for i in 0..60 {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            let p = rf.proba_row(&row);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
