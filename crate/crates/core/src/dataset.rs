//! Manifest-level ingestion: parse every trace, clean it and cut it into
//! flows.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::sessionizer::{sessionize, Flow, SessionizerConfig};
use crate::trace_model::{filter_clean_tcp, parse_packet_log, DatasetManifest, TraceFormat};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub manifest: DatasetManifest,
    pub trace_paths: Vec<PathBuf>,
    /// Flows of all traces, trace by trace in manifest order.
    pub flows: Vec<Flow>,
    /// Index into `trace_paths` for every flow.
    pub flow_trace: Vec<usize>,
}

impl LoadedDataset {
    pub fn labels(&self) -> std::collections::BTreeSet<&str> {
        self.flows.iter().map(|f| f.app_label.as_str()).collect()
    }
}

pub fn load_trace_flows(path: &Path, config: &SessionizerConfig) -> Result<Vec<Flow>> {
    let trace = filter_clean_tcp(parse_packet_log(path, TraceFormat::from_path(path))?);
    Ok(sessionize(&trace, config))
}

pub fn load_dataset(
    manifest: &DatasetManifest,
    config: &SessionizerConfig,
) -> Result<LoadedDataset> {
    config.validate()?;
    let trace_paths = manifest.trace_paths();
    let per_trace = trace_paths
        .par_iter()
        .map(|p| load_trace_flows(p, config))
        .collect::<Vec<_>>();
    let mut flows = Vec::new();
    let mut flow_trace = Vec::new();
    for (i, result) in per_trace.into_iter().enumerate() {
        let trace_flows = result.map_err(|e| Error::Dataset {
            manifest: manifest.name.clone(),
            message: e.to_string(),
        })?;
        flow_trace.extend(std::iter::repeat_n(i, trace_flows.len()));
        flows.extend(trace_flows);
    }
    if flows.is_empty() {
        return Err(Error::Dataset {
            manifest: manifest.name.clone(),
            message: "no flows after cleaning and sessionization".into(),
        });
    }
    Ok(LoadedDataset {
        manifest: manifest.clone(),
        trace_paths,
        flows,
        flow_trace,
    })
}
