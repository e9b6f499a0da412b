//! CART classification trees with Gini impurity and per-node feature
//! subsampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Samples with `row[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Leaf {
        /// Training samples per class, indexed like the forest's classes.
        counts: Vec<u32>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    pub fn leaf_for(&self, row: &[f64]) -> &[u32] {
        let mut node = self;
        loop {
            match node {
                Node::Leaf { counts } => return counts,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if row[*feature] <= *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Adds this tree's weighted impurity decrease per feature into
    /// `importances` and returns the class counts below the node.
    pub(crate) fn accumulate_importance(&self, importances: &mut [f64]) -> Vec<u64> {
        match self {
            Node::Leaf { counts } => counts.iter().map(|&c| u64::from(c)).collect(),
            Node::Split {
                feature,
                left,
                right,
                ..
            } => {
                let l = left.accumulate_importance(importances);
                let r = right.accumulate_importance(importances);
                let total: Vec<u64> = l.iter().zip(&r).map(|(a, b)| a + b).collect();
                importances[*feature] +=
                    weighted_gini(&total) - weighted_gini(&l) - weighted_gini(&r);
                total
            }
        }
    }

    /// Visits every leaf's counts.
    pub fn for_each_leaf(&self, f: &mut impl FnMut(&[u32])) {
        match self {
            Node::Leaf { counts } => f(counts),
            Node::Split { left, right, .. } => {
                left.for_each_leaf(f);
                right.for_each_leaf(f);
            }
        }
    }

    pub fn max_feature(&self) -> Option<usize> {
        match self {
            Node::Leaf { .. } => None,
            Node::Split {
                feature,
                left,
                right,
                ..
            } => [Some(*feature), left.max_feature(), right.max_feature()]
                .into_iter()
                .flatten()
                .max(),
        }
    }
}

/// n * gini(counts)
fn weighted_gini(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let sq: u64 = counts.iter().map(|c| c * c).sum();
    n as f64 - sq as f64 / n as f64
}

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub features_per_split: usize,
}

struct Builder<'a, R> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    n_classes: usize,
    n_features: usize,
    params: TreeParams,
    rng: &'a mut R,
    order: Vec<usize>,
}

/// Grows one tree over the given sample (bootstrap indices may repeat).
pub fn grow_tree<R: Rng>(
    x: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    sample: &mut [usize],
    params: TreeParams,
    rng: &mut R,
) -> Node {
    let n_features = x.first().map_or(0, Vec::len);
    let mut builder = Builder {
        x,
        y,
        n_classes,
        n_features,
        params,
        rng,
        order: (0..n_features).collect(),
    };
    builder.grow(sample, 0)
}

struct Candidate {
    score: f64,
    feature: usize,
    threshold: f64,
}

impl<R: Rng> Builder<'_, R> {
    fn counts(&self, idx: &[usize]) -> Vec<u32> {
        let mut counts = vec![0u32; self.n_classes];
        for &i in idx {
            counts[self.y[i]] += 1;
        }
        counts
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize) -> Node {
        let counts = self.counts(idx);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_capped = self.params.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_capped || idx.len() < self.params.min_samples_split {
            return Node::Leaf { counts };
        }
        let Some(best) = self.best_split(idx, &counts) else {
            return Node::Leaf { counts };
        };

        let mut mid = 0;
        for k in 0..idx.len() {
            if self.x[idx[k]][best.feature] <= best.threshold {
                idx.swap(k, mid);
                mid += 1;
            }
        }
        let (l, r) = idx.split_at_mut(mid);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// Draws features in random order until `features_per_split` non-constant
    /// ones have been scored; falls back to further features if the first
    /// draws are all constant within the node.
    fn best_split(&mut self, idx: &[usize], counts: &[u32]) -> Option<Candidate> {
        let n = idx.len();
        let total_sq: u64 = counts.iter().map(|&c| u64::from(c) * u64::from(c)).sum();
        let mut best: Option<Candidate> = None;
        let mut scored = 0;
        let mut values: Vec<(f64, usize)> = Vec::with_capacity(n);
        let mut left = vec![0u64; self.n_classes];
        let mut right = vec![0u64; self.n_classes];

        for k in 0..self.n_features {
            if scored >= self.params.features_per_split {
                break;
            }
            let j = self.rng.random_range(k..self.n_features);
            self.order.swap(k, j);
            let feature = self.order[k];

            values.clear();
            values.extend(idx.iter().map(|&i| (self.x[i][feature], self.y[i])));
            values.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            if values[0].0 == values[n - 1].0 {
                continue;
            }
            scored += 1;

            left.iter_mut().for_each(|c| *c = 0);
            right
                .iter_mut()
                .zip(counts)
                .for_each(|(r, &c)| *r = u64::from(c));
            let (mut sq_left, mut sq_right) = (0u64, total_sq);
            for i in 0..n - 1 {
                let c = values[i].1;
                sq_left += 2 * left[c] + 1;
                left[c] += 1;
                sq_right -= 2 * right[c] - 1;
                right[c] -= 1;
                let (a, b) = (values[i].0, values[i + 1].0);
                if a == b {
                    continue;
                }
                let n_left = (i + 1) as f64;
                let n_right = (n - i - 1) as f64;
                // Maximising this minimises the weighted child Gini.
                let score = sq_left as f64 / n_left + sq_right as f64 / n_right;
                if best.as_ref().is_none_or(|b| score > b.score) {
                    let mid = a + (b - a) / 2.0;
                    best = Some(Candidate {
                        score,
                        feature,
                        threshold: if mid < b { mid } else { a },
                    });
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng;

    fn params(max_depth: Option<usize>) -> TreeParams {
        TreeParams {
            max_depth,
            min_samples_split: 2,
            features_per_split: 2,
        }
    }

    #[test]
    fn pure_node_is_leaf() {
        let x = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let y = vec![1, 1];
        let tree = grow_tree(&x, &y, 2, &mut [0, 1], params(None), &mut rng(0));
        assert_eq!(tree, Node::Leaf { counts: vec![0, 2] });
    }

    #[test]
    fn separates_on_single_threshold() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 0.0]).collect();
        let y: Vec<usize> = (0..10).map(|i| usize::from(i >= 5)).collect();
        let mut idx: Vec<usize> = (0..10).collect();
        let tree = grow_tree(&x, &y, 2, &mut idx, params(None), &mut rng(3));
        match &tree {
            Node::Split {
                feature, threshold, ..
            } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 4.5);
            }
            leaf => panic!("{leaf:?}"),
        }
        for (row, &label) in x.iter().zip(&y) {
            let counts = tree.leaf_for(row);
            assert_eq!(counts[label], 5);
        }
    }

    #[test]
    fn constant_features_give_leaf() {
        let x = vec![vec![1.0, 1.0]; 4];
        let y = vec![0, 1, 0, 1];
        let tree = grow_tree(&x, &y, 2, &mut [0, 1, 2, 3], params(None), &mut rng(0));
        assert_eq!(tree, Node::Leaf { counts: vec![2, 2] });
    }

    #[test]
    fn depth_cap_is_honoured() {
        let x: Vec<Vec<f64>> = (0..32)
            .map(|i| vec![i as f64, (i * 7 % 32) as f64])
            .collect();
        let y: Vec<usize> = (0..32).map(|i| i % 4).collect();
        let mut idx: Vec<usize> = (0..32).collect();
        let tree = grow_tree(&x, &y, 4, &mut idx, params(Some(2)), &mut rng(1));
        assert!(tree.depth() <= 2);
        let mut total = 0;
        tree.for_each_leaf(&mut |c| total += c.iter().sum::<u32>());
        assert_eq!(total, 32);
    }

    #[test]
    fn importance_of_a_single_split() {
        let tree = Node::Split {
            feature: 1,
            threshold: 0.5,
            left: Box::new(Node::Leaf { counts: vec![3, 0] }),
            right: Box::new(Node::Leaf { counts: vec![1, 4] }),
        };
        let mut imp = vec![0.0; 3];
        let counts = tree.accumulate_importance(&mut imp);
        assert_eq!(counts, vec![4, 4]);
        // 8 * 0.5 - 0 - 5 * (1 - 1/25 - 16/25)
        assert!((imp[1] - (4.0 - 1.6)).abs() < 1e-12);
        assert_eq!(imp[0], 0.0);
    }
}
