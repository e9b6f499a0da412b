//! Scaling, feature selection, the forest classifier and model files.
//!
//! A [`TrainedPipeline`] maps a raw 54-value feature vector through the
//! min-max scaler, keeps the selected columns and asks the forest for class
//! probabilities. Pipelines are stored as versioned JSON with the trees as
//! nested nodes.

mod forest;
mod scaler;
mod selector;
mod tree;

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use forest::{argmax, ForestModel, ForestParams};
pub use scaler::MinMaxScaler;
pub use selector::{FeatureSelector, DEFAULT_SELECTION_THRESHOLD};
pub use tree::{grow_tree, Node, TreeParams};

use crate::features::{FeatureMatrix, MadMode};
use crate::{Error, Result};

pub const MODEL_VERSION: &str = "flowprint-model/1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnConfig {
    pub forest: ForestParams,
    pub selection_threshold: f64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig {
            forest: ForestParams::default(),
            selection_threshold: DEFAULT_SELECTION_THRESHOLD,
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        self.forest.validate()?;
        if !(0.0..1.0).contains(&self.selection_threshold) {
            return Err(Error::InvalidConfig(format!(
                "selection threshold must be in [0, 1), got {}",
                self.selection_threshold
            )));
        }
        Ok(())
    }

    /// SHA-256 over the JSON form of the config and seed.
    pub fn hash(&self, seed: u64) -> String {
        let json = serde_json::to_vec(&(self, seed)).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineMetadata {
    pub training_manifest: Option<String>,
    pub config_hash: String,
    /// Caller-supplied; left empty so that identical runs give identical files.
    pub created_at: Option<String>,
    pub n_trees: usize,
    pub seed: u64,
    /// Feature convention the pipeline was trained with.
    pub mad_mode: MadMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPipeline {
    pub scaler: MinMaxScaler,
    pub selector: FeatureSelector,
    pub forest: ForestModel,
    /// Every label the pipeline knows about. May be wider than the forest's
    /// classes when an app has no training rows left.
    pub label_set: Vec<String>,
    pub metadata: PipelineMetadata,
}

/// Scale, select and train on a raw feature matrix.
pub fn fit_pipeline(
    matrix: &FeatureMatrix,
    config: &LearnConfig,
    seed: u64,
) -> Result<TrainedPipeline> {
    config.validate()?;
    let scaler = MinMaxScaler::fit(matrix)?;
    let scaled = scaler.transform(matrix)?;
    let selector = FeatureSelector::fit(&scaled, &config.forest, seed, config.selection_threshold)?;
    let reduced = selector.select(&scaled)?;
    let forest = ForestModel::fit(&reduced, &config.forest, seed)?;
    let label_set = forest.classes.clone();
    Ok(TrainedPipeline {
        scaler,
        selector,
        forest,
        label_set,
        metadata: PipelineMetadata {
            training_manifest: None,
            config_hash: config.hash(seed),
            created_at: None,
            n_trees: config.forest.n_trees,
            seed,
            mad_mode: MadMode::default(),
        },
    })
}

impl TrainedPipeline {
    pub fn classes(&self) -> &[String] {
        &self.forest.classes
    }

    /// Class probabilities, ordered like [`classes`](Self::classes), for a
    /// raw unscaled feature row.
    pub fn predict_proba(&self, raw: &[f64]) -> Result<Vec<f64>> {
        let scaled = self.scaler.transform_row(raw)?;
        let selected = self.selector.select_row(&scaled)?;
        self.forest.predict_proba(&selected)
    }

    pub fn predict(&self, raw: &[f64]) -> Result<(&str, f64)> {
        let (idx, p) = argmax(&self.predict_proba(raw)?);
        Ok((&self.forest.classes[idx], p))
    }

    pub fn check_consistency(&self) -> Result<()> {
        let dim = self.scaler.dim();
        if self.scaler.max.len() != dim
            || self
                .scaler
                .min
                .iter()
                .zip(&self.scaler.max)
                .any(|(a, b)| a > b)
        {
            return Err(Error::ModelFormat("scaler min/max are inconsistent".into()));
        }
        if self.selector.dim() != dim || self.selector.importances.len() != dim {
            return Err(Error::ModelFormat(format!(
                "selector covers {} features, scaler {dim}",
                self.selector.dim()
            )));
        }
        if self.selector.selected_count() != self.forest.n_features {
            return Err(Error::ModelFormat(format!(
                "forest expects {} features but the selector keeps {}",
                self.forest.n_features,
                self.selector.selected_count()
            )));
        }
        self.forest.validate()?;
        let labels: BTreeSet<&String> = self.label_set.iter().collect();
        if self.forest.classes.iter().any(|c| !labels.contains(c)) {
            return Err(Error::ModelFormat(
                "forest class missing from label set".into(),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let file = ModelFileRef {
            version: MODEL_VERSION,
            scaler: &self.scaler,
            selector: &self.selector,
            forest: &self.forest,
            label_set: &self.label_set,
            metadata: &self.metadata,
        };
        let mut bytes = serde_json::to_vec(&file)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let probe: VersionProbe = deserialize_deep(text)?;
        match probe.version {
            Some(v) if v == MODEL_VERSION => {}
            Some(found) => {
                return Err(Error::ModelVersion {
                    found,
                    expected: MODEL_VERSION.into(),
                })
            }
            None => return Err(Error::ModelFormat("missing version tag".into())),
        }
        let file: ModelFile = deserialize_deep(text)?;
        let pipeline = TrainedPipeline {
            scaler: file.scaler,
            selector: file.selector,
            forest: file.forest,
            label_set: file.label_set,
            metadata: file.metadata,
        };
        pipeline.check_consistency()?;
        Ok(pipeline)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Serialize)]
struct ModelFileRef<'a> {
    version: &'a str,
    scaler: &'a MinMaxScaler,
    selector: &'a FeatureSelector,
    forest: &'a ForestModel,
    label_set: &'a [String],
    metadata: &'a PipelineMetadata,
}

#[derive(Deserialize)]
struct ModelFile {
    scaler: MinMaxScaler,
    selector: FeatureSelector,
    forest: ForestModel,
    label_set: Vec<String>,
    metadata: PipelineMetadata,
}

#[derive(Deserialize)]
struct VersionProbe {
    version: Option<String>,
}

/// Trees can nest deeper than serde_json's default recursion limit.
fn deserialize_deep<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    de.disable_recursion_limit();
    let value = T::deserialize(serde_stacker::Deserializer::new(&mut de))
        .map_err(|e| Error::ModelFormat(e.to_string()))?;
    de.end().map_err(|e| Error::ModelFormat(e.to_string()))?;
    Ok(value)
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;
    use crate::seed::rng;

    fn blobs(n: usize, seed: u64) -> FeatureMatrix {
        let mut r = rng(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let class = i % 3;
            let row: Vec<f64> = (0..6)
                .map(|j| {
                    let centre = if j < 2 { class as f64 * 10.0 } else { 0.0 };
                    centre + r.random_range(-4.0..4.0)
                })
                .collect();
            rows.push(row);
            labels.push(format!("app{class}"));
        }
        FeatureMatrix::new(rows, labels).unwrap()
    }

    fn small_config() -> LearnConfig {
        LearnConfig {
            forest: ForestParams {
                n_trees: 15,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn round_trip_preserves_predictions() {
        let train = blobs(90, 1);
        let pipeline = fit_pipeline(&train, &small_config(), 4).unwrap();
        let bytes = pipeline.to_json().unwrap();
        let back = TrainedPipeline::from_json(std::str::from_utf8(&bytes).unwrap()).unwrap();
        assert_eq!(back, pipeline);
        for row in &blobs(100, 2).rows {
            assert_eq!(
                back.predict_proba(row).unwrap(),
                pipeline.predict_proba(row).unwrap()
            );
        }
    }

    #[test]
    fn truncated_file_is_rejected() {
        let pipeline = fit_pipeline(&blobs(30, 1), &small_config(), 4).unwrap();
        let bytes = pipeline.to_json().unwrap();
        let text = std::str::from_utf8(&bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(
            TrainedPipeline::from_json(text),
            Err(Error::ModelFormat(_))
        ));
        assert!(matches!(
            TrainedPipeline::from_json(""),
            Err(Error::ModelFormat(_))
        ));
    }

    #[test]
    fn unknown_version_is_rejected() {
        let pipeline = fit_pipeline(&blobs(30, 1), &small_config(), 4).unwrap();
        let text = String::from_utf8(pipeline.to_json().unwrap())
            .unwrap()
            .replace(MODEL_VERSION, "flowprint-model/99");
        match TrainedPipeline::from_json(&text) {
            Err(Error::ModelVersion { found, .. }) => assert_eq!(found, "flowprint-model/99"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn inconsistent_file_is_rejected() {
        let pipeline = fit_pipeline(&blobs(30, 1), &small_config(), 4).unwrap();
        let mut value: serde_json::Value =
            serde_json::from_slice(&pipeline.to_json().unwrap()).unwrap();
        value["forest"]["n_features"] = serde_json::json!(99);
        assert!(matches!(
            TrainedPipeline::from_json(&value.to_string()),
            Err(Error::ModelFormat(_))
        ));
    }

    #[test]
    fn pipeline_dimension_mismatch() {
        let pipeline = fit_pipeline(&blobs(30, 1), &small_config(), 4).unwrap();
        assert!(matches!(
            pipeline.predict_proba(&[0.0; 3]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn informative_columns_are_selected() {
        let pipeline = fit_pipeline(&blobs(150, 3), &small_config(), 9).unwrap();
        let sel = &pipeline.selector;
        assert!(sel.mask[0] && sel.mask[1]);
        assert!((sel.importances.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for (imp, &m) in sel.importances.iter().zip(&sel.mask) {
            assert_eq!(m, *imp > sel.threshold);
        }
        assert_eq!(pipeline.forest.n_features, sel.selected_count());
    }

    #[test]
    fn config_hash_tracks_inputs() {
        let c = LearnConfig::default();
        assert_eq!(c.hash(1), c.hash(1));
        assert_ne!(c.hash(1), c.hash(2));
        assert_eq!(c.hash(1).len(), 64);
    }
}
