//! Defaults read from the `--config` TOML file. Explicit flags win.

use std::path::Path;

use anyhow::Context;
use flowprint::eval::ExperimentConfig;
use flowprint::features::MadMode;
use flowprint::learn::LearnConfig;
use flowprint::sessionizer::SessionizerConfig;
use serde::Deserialize;

use crate::args::{LearnArgs, SessionArgs};
use crate::UsageError;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub log_level: Option<String>,
    pub sessionizer: SessionizerConfig,
    pub mad_mode: MadMode,
    pub learn: LearnConfig,
    pub split_fraction: Option<f64>,
    pub threshold: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text)
            .map_err(|e| UsageError(format!("config {}: {e}", path.display())).into())
    }

    pub fn sessionizer(&self, burst_threshold: Option<f64>) -> anyhow::Result<SessionizerConfig> {
        let mut cfg = self.sessionizer;
        if let Some(t) = burst_threshold {
            cfg.burst_threshold = t;
        }
        cfg.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(cfg)
    }

    pub fn experiment(
        &self,
        session: &SessionArgs,
        learn: &LearnArgs,
    ) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig {
            sessionizer: self.sessionizer(session.burst_threshold)?,
            mad_mode: session.mad_mode.unwrap_or(self.mad_mode),
            learn: self.learn,
            split_fraction: learn.split_fraction.or(self.split_fraction),
        };
        if let Some(n) = learn.n_trees {
            cfg.learn.forest.n_trees = n;
        }
        if let Some(t) = learn.selection_threshold {
            cfg.learn.selection_threshold = t;
        }
        cfg.learn
            .validate()
            .map_err(|e| UsageError(e.to_string()))?;
        if let Some(f) = cfg.split_fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(
                    UsageError(format!("split fraction must be in (0, 1), got {f}")).into(),
                );
            }
        }
        Ok(cfg)
    }
}
