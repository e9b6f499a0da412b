//! Per-flow statistical fingerprint.
//!
//! Each flow yields three packet-length series (incoming, outgoing, both
//! directions in arrival order) and eighteen statistics per series, for 54
//! values laid out series-major:
//!
//! ```text
//! in_min .. in_count, out_min .. out_count, bi_min .. bi_count
//! ```
//!
//! Conventions: sample (n-1) variance, adjusted Fisher-Pearson skewness,
//! bias-corrected excess kurtosis, linearly interpolated percentiles. A
//! statistic that is undefined for a short series (variance and std need 2
//! values, skew 3, kurtosis 4) is 0, as is every statistic of an empty
//! series. Skew and kurtosis of a constant series are 0.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::sessionizer::Flow;
use crate::trace_model::Direction;
use crate::{Error, Result};

pub const STATISTIC_COUNT: usize = 18;
pub const SERIES_COUNT: usize = 3;
pub const FEATURE_COUNT: usize = STATISTIC_COUNT * SERIES_COUNT;

pub const SERIES_NAMES: [&str; SERIES_COUNT] = ["in", "out", "bi"];

pub const STATISTIC_NAMES: [&str; STATISTIC_COUNT] = [
    "min", "max", "mean", "mad", "std", "var", "skew", "kurt", "p10", "p20", "p30", "p40", "p50",
    "p60", "p70", "p80", "p90", "count",
];

/// Offset of the `count` statistic inside a series block.
pub const COUNT_OFFSET: usize = STATISTIC_COUNT - 1;

/// Column names, e.g. `in_min`, ..., `bi_count`.
pub fn feature_names() -> Vec<String> {
    SERIES_NAMES
        .iter()
        .flat_map(|s| STATISTIC_NAMES.iter().map(move |t| format!("{s}_{t}")))
        .collect()
}

/// How the `mad` statistic is computed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MadMode {
    /// median(|x - median(x)|)
    #[default]
    Median,
    /// mean(|x - mean(x)|)
    Mean,
}

impl std::str::FromStr for MadMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "median" => Ok(MadMode::Median),
            "mean" => Ok(MadMode::Mean),
            other => Err(format!(
                "unknown mad mode `{other}` (expected median or mean)"
            )),
        }
    }
}

/// Linear interpolation between closest ranks of an ascending slice.
fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// The eighteen statistics of one series, in [`STATISTIC_NAMES`] order.
pub fn series_statistics(series: &[f64], mad_mode: MadMode) -> [f64; STATISTIC_COUNT] {
    let mut out = [0.0; STATISTIC_COUNT];
    let n = series.len();
    if n == 0 {
        return out;
    }
    let mut sorted = series.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mean = sorted.iter().sum::<f64>() / nf;
    let median = percentile_sorted(&sorted, 0.5);
    let constant = sorted[0] == sorted[n - 1];

    let mad = match mad_mode {
        MadMode::Median => {
            let mut dev: Vec<f64> = sorted.iter().map(|x| (x - median).abs()).collect();
            dev.sort_by(f64::total_cmp);
            percentile_sorted(&dev, 0.5)
        }
        MadMode::Mean => sorted.iter().map(|x| (x - mean).abs()).sum::<f64>() / nf,
    };

    let (mut s2, mut s3, mut s4) = (0.0, 0.0, 0.0);
    for x in &sorted {
        let d = x - mean;
        let d2 = d * d;
        s2 += d2;
        s3 += d2 * d;
        s4 += d2 * d2;
    }

    let var = if n >= 2 { s2 / (nf - 1.0) } else { 0.0 };
    let skew = if n >= 3 && !constant {
        let m2 = s2 / nf;
        let m3 = s3 / nf;
        (nf * (nf - 1.0)).sqrt() / (nf - 2.0) * m3 / m2.powf(1.5)
    } else {
        0.0
    };
    let kurt = if n >= 4 && !constant {
        let a = (nf + 1.0) * nf * (nf - 1.0) / ((nf - 2.0) * (nf - 3.0));
        let b = 3.0 * (nf - 1.0) * (nf - 1.0) / ((nf - 2.0) * (nf - 3.0));
        a * s4 / (s2 * s2) - b
    } else {
        0.0
    };

    out[0] = sorted[0];
    out[1] = sorted[n - 1];
    out[2] = mean;
    out[3] = mad;
    out[4] = var.sqrt();
    out[5] = var;
    out[6] = skew;
    out[7] = kurt;
    for (k, slot) in out[8..17].iter_mut().enumerate() {
        *slot = percentile_sorted(&sorted, (k + 1) as f64 / 10.0);
    }
    out[COUNT_OFFSET] = nf;
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: [f64; FEATURE_COUNT],
    pub app_label: String,
}

impl FeatureVector {
    pub fn series(&self, index: usize) -> &[f64] {
        &self.values[index * STATISTIC_COUNT..(index + 1) * STATISTIC_COUNT]
    }
}

pub fn extract_features(flow: &Flow, mad_mode: MadMode) -> Result<FeatureVector> {
    if flow.packets.is_empty() {
        return Err(Error::EmptyFlow);
    }
    let mut incoming = Vec::new();
    let mut outgoing = Vec::new();
    let mut both = Vec::with_capacity(flow.packets.len());
    for p in &flow.packets {
        let len = f64::from(p.length);
        match p.direction {
            Direction::Incoming => incoming.push(len),
            Direction::Outgoing => outgoing.push(len),
        }
        both.push(len);
    }
    let mut values = [0.0; FEATURE_COUNT];
    for (i, series) in [incoming, outgoing, both].iter().enumerate() {
        values[i * STATISTIC_COUNT..(i + 1) * STATISTIC_COUNT]
            .copy_from_slice(&series_statistics(series, mad_mode));
    }
    Ok(FeatureVector {
        values,
        app_label: flow.app_label.clone(),
    })
}

/// Row-major matrix with one label per row. The width is 54 for raw
/// features and shrinks after feature selection.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<String>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::InvalidConfig(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        if let Some(width) = rows.first().map(Vec::len) {
            if let Some(bad) = rows.iter().find(|r| r.len() != width) {
                return Err(Error::DimensionMismatch {
                    expected: width,
                    got: bad.len(),
                });
            }
        }
        Ok(FeatureMatrix { rows, labels })
    }

    pub fn from_vectors(vectors: Vec<FeatureVector>) -> Self {
        let (rows, labels) = vectors
            .into_iter()
            .map(|v| (v.values.to_vec(), v.app_label))
            .unzip();
        FeatureMatrix { rows, labels }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Column count, 0 for an empty matrix.
    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// Rows picked by index, in the given order.
    pub fn subset(&self, indices: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i].clone()).collect(),
        }
    }

    /// Exports a 54-column matrix with named columns and a trailing `label`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        if !self.is_empty() && self.dim() != FEATURE_COUNT {
            return Err(Error::DimensionMismatch {
                expected: FEATURE_COUNT,
                got: self.dim(),
            });
        }
        let mut csv = csv::Writer::from_writer(out);
        let mut header = feature_names();
        header.push("label".into());
        csv.write_record(&header)?;
        for (row, label) in self.rows.iter().zip(&self.labels) {
            let mut record: Vec<String> = row.iter().map(f64::to_string).collect();
            record.push(label.clone());
            csv.write_record(&record)?;
        }
        csv.flush().map_err(|e| Error::io("<feature csv>", e))?;
        Ok(())
    }
}

/// One row per flow, in input order.
pub fn build_feature_matrix(flows: &[Flow], mad_mode: MadMode) -> Result<FeatureMatrix> {
    let vectors = flows
        .par_iter()
        .enumerate()
        .map(|(index, flow)| {
            extract_features(flow, mad_mode).map_err(|e| Error::FlowFeatures {
                index,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureMatrix::from_vectors(vectors))
}
