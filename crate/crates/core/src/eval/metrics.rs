use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_threshold, ClassificationOutcome, Classifier, Verdict};
use crate::features::FeatureMatrix;
use crate::learn::argmax;
use crate::{Error, Result};

/// Precision, recall and F1 are macro-averaged over the apps present among
/// the accepted flows' true labels; accuracy is micro over accepted flows.
/// Ambiguous and rejected flows only show up in the counters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub flows_total: usize,
    pub flows_ambiguous: usize,
    pub flows_rejected: usize,
    pub flows_classified: usize,
    pub classified_fraction: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn compute_metrics(outcomes: &[(ClassificationOutcome, String)]) -> MetricsReport {
    let mut report = MetricsReport {
        flows_total: outcomes.len(),
        ..Default::default()
    };
    let mut accepted: Vec<(&str, &str)> = Vec::new();
    for (outcome, truth) in outcomes {
        match outcome.verdict {
            Verdict::Ambiguous => report.flows_ambiguous += 1,
            Verdict::RejectedLowConfidence => report.flows_rejected += 1,
            Verdict::Accepted => accepted.push((&outcome.predicted_label, truth)),
        }
    }
    report.flows_classified = accepted.len();
    report.classified_fraction = ratio(accepted.len(), outcomes.len());
    if accepted.is_empty() {
        return report;
    }

    let correct = accepted.iter().filter(|(p, t)| p == t).count();
    report.accuracy = ratio(correct, accepted.len());

    let classes: BTreeSet<&str> = accepted.iter().map(|(_, t)| *t).collect();
    let (mut p_sum, mut r_sum, mut f_sum) = (0.0, 0.0, 0.0);
    for class in &classes {
        let tp = accepted
            .iter()
            .filter(|(p, t)| p == class && t == class)
            .count();
        let predicted = accepted.iter().filter(|(p, _)| p == class).count();
        let actual = accepted.iter().filter(|(_, t)| t == class).count();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, actual);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        p_sum += precision;
        r_sum += recall;
        f_sum += f1;
    }
    let k = classes.len() as f64;
    report.precision = p_sum / k;
    report.recall = r_sum / k;
    report.f1 = f_sum / k;
    report
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub metrics: MetricsReport,
}

/// Evaluates `model` on `test` once per threshold. The model is queried once
/// per row; thresholds must be ascending and within [0, 1].
pub fn threshold_sweep<C: Classifier + Sync + ?Sized>(
    model: &C,
    test: &FeatureMatrix,
    thresholds: &[f64],
) -> Result<Vec<SweepPoint>> {
    for &t in thresholds {
        check_threshold(t)?;
    }
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidConfig(
            "sweep thresholds must be ascending".into(),
        ));
    }
    let predictions = test
        .rows
        .par_iter()
        .map(|row| model.predict_proba(row).map(|p| argmax(&p)))
        .collect::<Result<Vec<_>>>()?;
    let classes = model.classes();
    Ok(thresholds
        .iter()
        .map(|&threshold| {
            let outcomes: Vec<(ClassificationOutcome, String)> = predictions
                .iter()
                .zip(&test.labels)
                .map(|(&(idx, conf), truth)| {
                    (
                        ClassificationOutcome::from_prediction(&classes[idx], conf, threshold),
                        truth.clone(),
                    )
                })
                .collect();
            SweepPoint {
                threshold,
                metrics: compute_metrics(&outcomes),
            }
        })
        .collect())
}
