use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::metrics::{threshold_sweep, SweepPoint};
use crate::ambiguity::{train_reinforced, AmbiguityConfig, RelabelStats};
use crate::dataset::{load_dataset, LoadedDataset};
use crate::features::{build_feature_matrix, FeatureMatrix, MadMode};
use crate::learn::{fit_pipeline, LearnConfig};
use crate::seed::rng;
use crate::sessionizer::SessionizerConfig;
use crate::trace_model::{check_unique_names, DatasetManifest};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentMode {
    /// Shuffle one dataset's flows and hold out the remainder for testing.
    SingleDatasetSplit {
        #[serde(default = "default_train_fraction")]
        train_fraction: f64,
    },
    /// Train and test on independently collected datasets.
    CrossDataset,
}

fn default_train_fraction() -> f64 {
    0.75
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub train_manifest: PathBuf,
    #[serde(default)]
    pub test_manifest: Option<PathBuf>,
    pub mode: ExperimentMode,
    pub thresholds: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentSpec {
    /// Reads a spec file; manifest paths are relative to the spec's folder.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec: ExperimentSpec = serde_json::from_str(&text).map_err(|e| Error::Schema {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        spec.train_manifest = base.join(&spec.train_manifest);
        spec.test_manifest = spec.test_manifest.map(|p| base.join(p));
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() {
            return Err(Error::InvalidConfig(
                "thresholds: at least one value required".into(),
            ));
        }
        if let Some(t) = self.thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::InvalidConfig(format!(
                "thresholds: {t} is outside [0, 1]"
            )));
        }
        let mut sorted = self.thresholds.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted != self.thresholds {
            return Err(Error::InvalidConfig(
                "thresholds: values must be ascending".into(),
            ));
        }
        match self.mode {
            ExperimentMode::SingleDatasetSplit { train_fraction } => {
                if !(train_fraction > 0.0 && train_fraction < 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "mode.train_fraction must be in (0, 1), got {train_fraction}"
                    )));
                }
            }
            ExperimentMode::CrossDataset => {
                let test = self.test_manifest.as_ref().ok_or_else(|| {
                    Error::InvalidConfig("test_manifest is required for cross_dataset mode".into())
                })?;
                if same_file(&self.train_manifest, test) {
                    return Err(Error::InvalidConfig(
                        "cross_dataset mode needs distinct train_manifest and test_manifest".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => a == b,
    }
}

/// Everything besides the spec that shapes an experiment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub sessionizer: SessionizerConfig,
    pub mad_mode: MadMode,
    pub learn: LearnConfig,
    pub split_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub name: String,
    pub device: String,
    pub os_version: String,
    pub app_versions_tag: String,
    pub collection_time_tag: String,
    pub flows: usize,
    pub apps: usize,
}

impl DatasetSummary {
    fn new(manifest: &DatasetManifest, flows: usize, apps: usize) -> Self {
        DatasetSummary {
            name: manifest.name.clone(),
            device: manifest.device.clone(),
            os_version: manifest.os_version.clone(),
            app_versions_tag: manifest.app_versions_tag.clone(),
            collection_time_tag: manifest.collection_time_tag.clone(),
            flows,
            apps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conventions {
    pub precision_recall_f1: String,
    pub accuracy: String,
    pub acceptance: String,
    pub ambiguous: String,
}

impl Default for Conventions {
    fn default() -> Self {
        Conventions {
            precision_recall_f1: "macro average over apps among accepted flows".into(),
            accuracy: "micro over accepted flows".into(),
            acceptance: "confidence >= threshold".into(),
            ambiguous: "excluded from metrics, never thresholded".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub selected_features: usize,
    pub classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub mode: ExperimentMode,
    pub seed: u64,
    pub conventions: Conventions,
    pub config: ExperimentConfig,
    pub train_dataset: DatasetSummary,
    pub test_dataset: DatasetSummary,
    /// Test labels the training data never saw.
    pub unseen_test_labels: Vec<String>,
    pub preliminary_model: StageSummary,
    pub reinforced_model: StageSummary,
    pub preliminary: Vec<SweepPoint>,
    pub reinforced: Vec<SweepPoint>,
    pub relabel: RelabelStats,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

fn split_rows(n: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng(seed));
    let cut = ((n as f64 * train_fraction).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let test = order.split_off(cut);
    (order, test)
}

/// Ingests the datasets, trains a single-stage baseline on all training flows
/// and a two-stage reinforced pipeline, and sweeps both over the thresholds.
pub fn run_experiment(
    spec: &ExperimentSpec,
    config: &ExperimentConfig,
) -> Result<ExperimentReport> {
    spec.validate()?;
    config.learn.validate()?;
    let train_manifest = DatasetManifest::load(&spec.train_manifest)?;
    let train_data = load_dataset(&train_manifest, &config.sessionizer)?;
    let train_all = build_feature_matrix(&train_data.flows, config.mad_mode)?;

    let (train, test, test_data): (FeatureMatrix, FeatureMatrix, Option<LoadedDataset>) =
        match spec.mode {
            ExperimentMode::SingleDatasetSplit { train_fraction } => {
                let (tr, te) = split_rows(train_all.len(), train_fraction, spec.seed);
                (train_all.subset(&tr), train_all.subset(&te), None)
            }
            ExperimentMode::CrossDataset => {
                let path = spec.test_manifest.as_ref().expect("validated");
                let test_manifest = DatasetManifest::load(path)?;
                check_unique_names(&[&train_manifest, &test_manifest])?;
                let data = load_dataset(&test_manifest, &config.sessionizer)?;
                let test = build_feature_matrix(&data.flows, config.mad_mode)?;
                (train_all, test, Some(data))
            }
        };
    let test_manifest = test_data.as_ref().map_or(&train_manifest, |d| &d.manifest);

    let train_labels: BTreeSet<&String> = train.labels.iter().collect();
    let test_labels: BTreeSet<&String> = test.labels.iter().collect();
    let unseen: Vec<String> = test_labels
        .difference(&train_labels)
        .map(|s| s.to_string())
        .collect();
    if unseen.len() == test_labels.len() {
        return Err(Error::Dataset {
            manifest: test_manifest.name.clone(),
            message: format!(
                "shares no app label with training dataset {}",
                train_manifest.name
            ),
        });
    }
    if !unseen.is_empty() {
        warn!(
            "{} apps in {} are absent from {}: {}",
            unseen.len(),
            test_manifest.name,
            train_manifest.name,
            unseen.join(", ")
        );
    }

    info!(
        "{}: {} training flows, {} test flows",
        spec.name,
        train.len(),
        test.len()
    );
    let baseline = fit_pipeline(&train, &config.learn, spec.seed)?;
    let ambiguity = AmbiguityConfig {
        split_fraction: config.split_fraction.unwrap_or(0.5),
        rng_seed: spec.seed,
    };
    let reinforced = train_reinforced(&train, &ambiguity, &config.learn)?;
    info!(
        "{}: relabeled {} of {} flows as ambiguous",
        spec.name, reinforced.relabel_stats.relabeled, reinforced.relabel_stats.total
    );

    let preliminary_sweep = threshold_sweep(&baseline, &test, &spec.thresholds)?;
    let reinforced_sweep = threshold_sweep(&reinforced, &test, &spec.thresholds)?;

    Ok(ExperimentReport {
        name: spec.name.clone(),
        mode: spec.mode,
        seed: spec.seed,
        conventions: Conventions::default(),
        config: *config,
        train_dataset: DatasetSummary::new(&train_manifest, train.len(), train_labels.len()),
        test_dataset: DatasetSummary::new(test_manifest, test.len(), test_labels.len()),
        unseen_test_labels: unseen,
        preliminary_model: StageSummary {
            selected_features: baseline.selector.selected_count(),
            classes: baseline.classes().len(),
        },
        reinforced_model: StageSummary {
            selected_features: reinforced.reinforced.selector.selected_count(),
            classes: reinforced.reinforced.classes().len(),
        },
        preliminary: preliminary_sweep,
        reinforced: reinforced_sweep,
        relabel: reinforced.relabel_stats,
    })
}

pub fn write_sweep_csv<W: Write>(report: &ExperimentReport, out: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(out);
    csv.write_record([
        "stage",
        "threshold",
        "precision",
        "recall",
        "f1",
        "accuracy",
        "classified_fraction",
        "flows_total",
        "flows_ambiguous",
        "flows_rejected",
    ])?;
    for (stage, points) in [
        ("preliminary", &report.preliminary),
        ("reinforced", &report.reinforced),
    ] {
        for p in points {
            let m = &p.metrics;
            csv.write_record([
                stage.to_owned(),
                p.threshold.to_string(),
                m.precision.to_string(),
                m.recall.to_string(),
                m.f1.to_string(),
                m.accuracy.to_string(),
                m.classified_fraction.to_string(),
                m.flows_total.to_string(),
                m.flows_ambiguous.to_string(),
                m.flows_rejected.to_string(),
            ])?;
        }
    }
    csv.flush().map_err(|e| Error::io("<sweep csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(mode: ExperimentMode, test: Option<&str>) -> ExperimentSpec {
        ExperimentSpec {
            name: "t".into(),
            train_manifest: "a.json".into(),
            test_manifest: test.map(PathBuf::from),
            mode,
            thresholds: vec![0.0, 0.5, 0.9],
            seed: 1,
        }
    }

    #[test]
    fn cross_dataset_needs_distinct_manifests() {
        assert!(spec(ExperimentMode::CrossDataset, Some("a.json"))
            .validate()
            .is_err());
        assert!(spec(ExperimentMode::CrossDataset, None).validate().is_err());
        assert!(spec(ExperimentMode::CrossDataset, Some("b.json"))
            .validate()
            .is_ok());
    }

    #[test]
    fn thresholds_validated() {
        let mut s = spec(
            ExperimentMode::SingleDatasetSplit {
                train_fraction: 0.75,
            },
            None,
        );
        assert!(s.validate().is_ok());
        s.thresholds = vec![0.5, 0.1];
        assert!(s.validate().is_err());
        s.thresholds = vec![0.5, 1.5];
        assert!(s.validate().is_err());
    }

    #[test]
    fn mode_wire_format() {
        let m: ExperimentMode = serde_json::from_str(r#"{"single_dataset_split": {}}"#).unwrap();
        assert_eq!(
            m,
            ExperimentMode::SingleDatasetSplit {
                train_fraction: 0.75
            }
        );
        let c: ExperimentMode = serde_json::from_str(r#""cross_dataset""#).unwrap();
        assert_eq!(c, ExperimentMode::CrossDataset);
    }

    #[test]
    fn split_rows_is_a_partition() {
        let (tr, te) = split_rows(100, 0.75, 3);
        assert_eq!((tr.len(), te.len()), (75, 25));
        let mut all: Vec<usize> = tr.into_iter().chain(te).collect();
        all.sort();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }
}
