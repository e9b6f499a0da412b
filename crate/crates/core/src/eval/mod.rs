//! Confidence-validated classification, metrics and experiment reports.

mod experiment;
mod metrics;

use serde::{Deserialize, Serialize};

pub use experiment::{
    run_experiment, write_sweep_csv, ExperimentConfig, ExperimentMode, ExperimentReport,
    ExperimentSpec,
};
pub use metrics::{compute_metrics, threshold_sweep, MetricsReport, SweepPoint};

use crate::ambiguity::ReinforcedPipeline;
use crate::learn::{argmax, TrainedPipeline};
use crate::{Error, Result, AMBIGUOUS_LABEL};

/// Anything that maps a raw feature row to class probabilities.
pub trait Classifier {
    fn classes(&self) -> &[String];
    fn predict_proba(&self, raw: &[f64]) -> Result<Vec<f64>>;
}

impl Classifier for TrainedPipeline {
    fn classes(&self) -> &[String] {
        TrainedPipeline::classes(self)
    }

    fn predict_proba(&self, raw: &[f64]) -> Result<Vec<f64>> {
        TrainedPipeline::predict_proba(self, raw)
    }
}

/// Identification uses the reinforced stage.
impl Classifier for ReinforcedPipeline {
    fn classes(&self) -> &[String] {
        self.reinforced.classes()
    }

    fn predict_proba(&self, raw: &[f64]) -> Result<Vec<f64>> {
        self.reinforced.predict_proba(raw)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accepted,
    RejectedLowConfidence,
    Ambiguous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationOutcome {
    pub predicted_label: String,
    pub confidence: f64,
    pub verdict: Verdict,
}

impl ClassificationOutcome {
    /// An ambiguous prediction is never thresholded. Anything else is
    /// accepted when `confidence >= threshold`.
    pub fn from_prediction(predicted_label: &str, confidence: f64, threshold: f64) -> Self {
        let verdict = if predicted_label == AMBIGUOUS_LABEL {
            Verdict::Ambiguous
        } else if confidence >= threshold {
            Verdict::Accepted
        } else {
            Verdict::RejectedLowConfidence
        };
        ClassificationOutcome {
            predicted_label: predicted_label.to_owned(),
            confidence,
            verdict,
        }
    }
}

pub(crate) fn check_threshold(threshold: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidConfig(format!(
            "validation threshold must be in [0, 1], got {threshold}"
        )));
    }
    Ok(())
}

pub fn classify<C: Classifier + ?Sized>(
    model: &C,
    features: &[f64],
    threshold: f64,
) -> Result<ClassificationOutcome> {
    check_threshold(threshold)?;
    let (idx, confidence) = argmax(&model.predict_proba(features)?);
    Ok(ClassificationOutcome::from_prediction(
        &model.classes()[idx],
        confidence,
        threshold,
    ))
}
