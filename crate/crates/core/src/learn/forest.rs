//! Random forest classifier: bootstrap-sampled CART trees whose leaf class
//! distributions are averaged into a probability vector.

use std::collections::BTreeSet;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, Node, TreeParams};
use crate::features::FeatureMatrix;
use crate::seed::derived_rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// `None` means floor(sqrt(d)).
    pub features_per_split: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: None,
            min_samples_split: 2,
            features_per_split: None,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidConfig("n_trees must be at least 1".into()));
        }
        if self.min_samples_split < 2 {
            return Err(Error::InvalidConfig(
                "min_samples_split must be at least 2".into(),
            ));
        }
        if self.features_per_split == Some(0) {
            return Err(Error::InvalidConfig(
                "features_per_split must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn features_for(&self, dim: usize) -> usize {
        self.features_per_split
            .unwrap_or_else(|| (dim as f64).sqrt().floor() as usize)
            .clamp(1, dim.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub params: ForestParams,
    pub seed: u64,
    /// Sorted; probability vectors are indexed by this order.
    pub classes: Vec<String>,
    pub n_features: usize,
    pub trees: Vec<Node>,
}

impl ForestModel {
    /// Tree `i` draws its bootstrap sample and split features from a stream
    /// derived from `(seed, i)`, so the result does not depend on thread
    /// scheduling.
    pub fn fit(matrix: &FeatureMatrix, params: &ForestParams, seed: u64) -> Result<Self> {
        params.validate()?;
        if matrix.is_empty() {
            return Err(Error::EmptyMatrix);
        }
        let classes: Vec<String> = matrix
            .labels
            .iter()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if classes.len() < 2 {
            return Err(Error::SingleClass {
                found: classes.len(),
            });
        }
        if matrix.rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(
                "training features must be finite".into(),
            ));
        }
        let y: Vec<usize> = matrix
            .labels
            .iter()
            .map(|l| classes.binary_search(l).expect("label collected above"))
            .collect();
        let n = matrix.len();
        let dim = matrix.dim();
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            min_samples_split: params.min_samples_split,
            features_per_split: params.features_for(dim),
        };
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = derived_rng(seed, t as u64);
                let mut sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                grow_tree(
                    &matrix.rows,
                    &y,
                    classes.len(),
                    &mut sample,
                    tree_params,
                    &mut rng,
                )
            })
            .collect();
        Ok(ForestModel {
            params: *params,
            seed,
            classes,
            n_features: dim,
            trees,
        })
    }

    /// Mean of the per-tree leaf class distributions.
    pub fn predict_proba(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: row.len(),
            });
        }
        let mut proba = vec![0.0; self.classes.len()];
        for tree in &self.trees {
            let counts = tree.leaf_for(row);
            let total: u32 = counts.iter().sum();
            for (p, &c) in proba.iter_mut().zip(counts) {
                *p += f64::from(c) / f64::from(total);
            }
        }
        let n = self.trees.len() as f64;
        proba.iter_mut().for_each(|p| *p /= n);
        Ok(proba)
    }

    /// Class index and probability of the most likely class; ties go to the
    /// earlier class.
    pub fn predict(&self, row: &[f64]) -> Result<(usize, f64)> {
        Ok(argmax(&self.predict_proba(row)?))
    }

    /// Mean decrease in impurity per feature, normalised to sum to 1.
    pub fn feature_importances(&self) -> Vec<f64> {
        let mut total = vec![0.0; self.n_features];
        for tree in &self.trees {
            let mut imp = vec![0.0; self.n_features];
            tree.accumulate_importance(&mut imp);
            let sum: f64 = imp.iter().sum();
            if sum > 0.0 {
                total.iter_mut().zip(&imp).for_each(|(t, v)| *t += v / sum);
            }
        }
        let sum: f64 = total.iter().sum();
        if sum > 0.0 {
            total.iter_mut().for_each(|t| *t /= sum);
        } else if self.n_features > 0 {
            // Every tree is a single leaf: no feature is preferred.
            total.fill(1.0 / self.n_features as f64);
        }
        total
    }

    /// Structural checks for a forest read from disk.
    pub fn validate(&self) -> Result<()> {
        if self.trees.is_empty() {
            return Err(Error::ModelFormat("forest has no trees".into()));
        }
        if self.classes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::ModelFormat(
                "forest classes must be sorted and unique".into(),
            ));
        }
        for tree in &self.trees {
            if tree.max_feature().is_some_and(|f| f >= self.n_features) {
                return Err(Error::ModelFormat(
                    "split on a feature outside the forest dimension".into(),
                ));
            }
            let mut bad = false;
            tree.for_each_leaf(&mut |c| {
                bad |= c.len() != self.classes.len() || c.iter().all(|&v| v == 0)
            });
            if bad {
                return Err(Error::ModelFormat(
                    "leaf class histogram does not match classes".into(),
                ));
            }
        }
        Ok(())
    }
}

pub fn argmax(proba: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &p) in proba.iter().enumerate() {
        if p > best.1 {
            best = (i, p);
        }
    }
    best
}
