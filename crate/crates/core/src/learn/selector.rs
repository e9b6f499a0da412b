use serde::{Deserialize, Serialize};

use super::forest::{ForestModel, ForestParams};
use crate::features::FeatureMatrix;
use crate::{Error, Result};

pub const DEFAULT_SELECTION_THRESHOLD: f64 = 0.01;

/// Keeps the features whose forest importance is strictly above `threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelector {
    pub importances: Vec<f64>,
    pub mask: Vec<bool>,
    pub threshold: f64,
}

impl FeatureSelector {
    pub fn from_importances(importances: Vec<f64>, threshold: f64) -> Result<Self> {
        let mask: Vec<bool> = importances.iter().map(|&v| v > threshold).collect();
        if !mask.iter().any(|&m| m) {
            return Err(Error::NoFeatureSelected { threshold });
        }
        Ok(FeatureSelector {
            importances,
            mask,
            threshold,
        })
    }

    /// Trains a forest on the (already scaled) matrix and thresholds its
    /// mean-decrease-in-impurity importances.
    pub fn fit(
        matrix: &FeatureMatrix,
        params: &ForestParams,
        seed: u64,
        threshold: f64,
    ) -> Result<Self> {
        let forest = ForestModel::fit(matrix, params, seed)?;
        Self::from_importances(forest.feature_importances(), threshold)
    }

    pub fn dim(&self) -> usize {
        self.mask.len()
    }

    pub fn selected_indices(&self) -> Vec<usize> {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }

    pub fn selected_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn select_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: row.len(),
            });
        }
        Ok(row
            .iter()
            .zip(&self.mask)
            .filter_map(|(&v, &m)| m.then_some(v))
            .collect())
    }

    pub fn select(&self, matrix: &FeatureMatrix) -> Result<FeatureMatrix> {
        let rows = matrix
            .rows
            .iter()
            .map(|r| self.select_row(r))
            .collect::<Result<Vec<_>>>()?;
        Ok(FeatureMatrix {
            rows,
            labels: matrix.labels.clone(),
        })
    }
}
