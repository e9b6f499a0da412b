//! Two-stage training that teaches the classifier to recognise traffic shared
//! between apps.
//!
//! The training matrix is shuffled and halved. A preliminary pipeline is fit
//! on the first half and used to classify the second half; every row it gets
//! wrong is relabeled [`AMBIGUOUS_LABEL`]. The reinforced pipeline is then fit
//! on the relabeled second half alone, so no preliminary training row ever
//! reaches it.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::features::FeatureMatrix;
use crate::learn::{fit_pipeline, LearnConfig, TrainedPipeline};
use crate::seed::rng;
use crate::trace_model::check_app_label;
use crate::{Error, Result, AMBIGUOUS_LABEL};

const MAX_SPLIT_ATTEMPTS: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityConfig {
    pub split_fraction: f64,
    pub rng_seed: u64,
}

impl Default for AmbiguityConfig {
    fn default() -> Self {
        AmbiguityConfig {
            split_fraction: 0.5,
            rng_seed: 0,
        }
    }
}

impl AmbiguityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "split fraction must be in (0, 1), got {}",
                self.split_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSplit {
    pub train: FeatureMatrix,
    pub test: FeatureMatrix,
    /// Row indices into the input matrix.
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

fn distinct_labels(m: &FeatureMatrix, rows: &[usize]) -> usize {
    rows.iter()
        .map(|&i| &m.labels[i])
        .collect::<BTreeSet<_>>()
        .len()
}

/// Shuffles with `rng_seed` and cuts at `split_fraction`. If either half ends
/// up with fewer than two classes the shuffle is retried with the next seed,
/// up to 100 times.
pub fn split_training(matrix: &FeatureMatrix, config: &AmbiguityConfig) -> Result<TrainingSplit> {
    config.validate()?;
    let n = matrix.len();
    if n < 2 {
        return Err(Error::SplitFailed { attempts: 0 });
    }
    let cut = ((n as f64 * config.split_fraction).round() as usize).clamp(1, n - 1);
    for attempt in 0..MAX_SPLIT_ATTEMPTS {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng(config.rng_seed.wrapping_add(attempt)));
        let (train_rows, test_rows) = order.split_at(cut);
        if distinct_labels(matrix, train_rows) >= 2 && distinct_labels(matrix, test_rows) >= 2 {
            return Ok(TrainingSplit {
                train: matrix.subset(train_rows),
                test: matrix.subset(test_rows),
                train_rows: train_rows.to_vec(),
                test_rows: test_rows.to_vec(),
            });
        }
    }
    Err(Error::SplitFailed {
        attempts: MAX_SPLIT_ATTEMPTS as usize,
    })
}

/// Replaces the label of every row the preliminary pipeline misclassifies
/// (plain argmax, no confidence threshold) with [`AMBIGUOUS_LABEL`].
pub fn relabel(preliminary: &TrainedPipeline, test: &FeatureMatrix) -> Result<FeatureMatrix> {
    let labels = test
        .rows
        .iter()
        .zip(&test.labels)
        .map(|(row, truth)| {
            let (predicted, _) = preliminary.predict(row)?;
            Ok(if predicted == truth {
                truth.clone()
            } else {
                AMBIGUOUS_LABEL.to_owned()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureMatrix {
        rows: test.rows.clone(),
        labels,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelabelStats {
    pub total: usize,
    pub relabeled: usize,
    /// Relabeled rows per original app label.
    pub per_app: BTreeMap<String, usize>,
}

impl RelabelStats {
    fn tally(original: &FeatureMatrix, relabeled: &FeatureMatrix) -> Self {
        let mut stats = RelabelStats {
            total: original.len(),
            ..Default::default()
        };
        for (before, after) in original.labels.iter().zip(&relabeled.labels) {
            if before != after {
                stats.relabeled += 1;
                *stats.per_app.entry(before.clone()).or_default() += 1;
            }
        }
        stats
    }
}

#[derive(Debug, Clone)]
pub struct ReinforcedPipeline {
    pub preliminary: TrainedPipeline,
    pub reinforced: TrainedPipeline,
    pub relabel_stats: RelabelStats,
    /// Input rows used to fit the preliminary stage.
    pub preliminary_rows: Vec<usize>,
    /// Input rows used to fit the reinforced stage, with their final labels.
    pub reinforced_rows: Vec<usize>,
    pub reinforced_labels: Vec<String>,
}

pub fn train_reinforced(
    matrix: &FeatureMatrix,
    config: &AmbiguityConfig,
    learn: &LearnConfig,
) -> Result<ReinforcedPipeline> {
    for label in matrix.labels.iter().collect::<BTreeSet<_>>() {
        check_app_label(label, "training data")?;
    }
    let split = split_training(matrix, config)?;
    let preliminary = fit_pipeline(&split.train, learn, config.rng_seed)?;
    let relabeled = relabel(&preliminary, &split.test)?;
    let relabel_stats = RelabelStats::tally(&split.test, &relabeled);
    let mut reinforced = fit_pipeline(&relabeled, learn, config.rng_seed)?;

    let mut label_set: BTreeSet<String> = preliminary.label_set.iter().cloned().collect();
    label_set.extend(split.test.labels.iter().cloned());
    if relabel_stats.relabeled > 0 {
        label_set.insert(AMBIGUOUS_LABEL.to_owned());
    }
    reinforced.label_set = label_set.into_iter().collect();

    Ok(ReinforcedPipeline {
        preliminary,
        reinforced,
        relabel_stats,
        preliminary_rows: split.train_rows,
        reinforced_rows: split.test_rows,
        reinforced_labels: relabeled.labels,
    })
}
