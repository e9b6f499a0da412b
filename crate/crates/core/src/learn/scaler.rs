use serde::{Deserialize, Serialize};

use crate::features::FeatureMatrix;
use crate::{Error, Result};

/// Column-wise min-max scaler fitted on training data.
///
/// Values outside the training range are not clamped, so a test value above
/// the training maximum maps above 1. Constant training columns map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(matrix: &FeatureMatrix) -> Result<Self> {
        if matrix.is_empty() {
            return Err(Error::EmptyMatrix);
        }
        let dim = matrix.dim();
        let mut min = vec![f64::INFINITY; dim];
        let mut max = vec![f64::NEG_INFINITY; dim];
        for row in &matrix.rows {
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Ok(MinMaxScaler { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn transform_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: row.len(),
            });
        }
        Ok(row
            .iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&v, (&lo, &hi))| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
            .collect())
    }

    pub fn transform(&self, matrix: &FeatureMatrix) -> Result<FeatureMatrix> {
        let rows = matrix
            .rows
            .iter()
            .map(|r| self.transform_row(r))
            .collect::<Result<Vec<_>>>()?;
        Ok(FeatureMatrix {
            rows,
            labels: matrix.labels.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: Vec<Vec<f64>>) -> FeatureMatrix {
        let labels = vec!["a".to_string(); rows.len()];
        FeatureMatrix::new(rows, labels).unwrap()
    }

    #[test]
    fn fits_column_extrema() {
        let s = MinMaxScaler::fit(&matrix(vec![
            vec![2.0, 5.0],
            vec![4.0, 5.0],
            vec![10.0, 5.0],
        ]))
        .unwrap();
        assert_eq!(s.min, vec![2.0, 5.0]);
        assert_eq!(s.max, vec![10.0, 5.0]);

        let two = MinMaxScaler::fit(&matrix(vec![vec![1.0, -3.0], vec![0.0, 7.0]])).unwrap();
        assert_eq!(two.min, vec![0.0, -3.0]);
        assert_eq!(two.max, vec![1.0, 7.0]);
    }

    #[test]
    fn empty_matrix_rejected() {
        assert!(matches!(
            MinMaxScaler::fit(&FeatureMatrix::default()),
            Err(Error::EmptyMatrix)
        ));
    }

    #[test]
    fn affine_map_without_clamping() {
        let s = MinMaxScaler {
            min: vec![2.0, 5.0],
            max: vec![10.0, 5.0],
        };
        let out = s
            .transform(&matrix(vec![
                vec![2.0, 5.0],
                vec![4.0, 1.0],
                vec![10.0, 99.0],
            ]))
            .unwrap();
        assert_eq!(
            out.rows,
            vec![vec![0.0, 0.0], vec![0.25, 0.0], vec![1.0, 0.0]]
        );
        assert_eq!(s.transform_row(&[12.0, 5.0]).unwrap(), vec![1.25, 0.0]);
        assert!(matches!(
            s.transform_row(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
