//! Deterministic synthetic traffic with known shared-library flows.
//!
//! Every app profile mixes its own distinctive flow archetypes with
//! archetypes drawn from a shared library. Each generated trace is written as
//! a JSON Lines packet log next to a `<trace_id>.archetypes.json` sidecar that
//! records, flow by flow, which archetype produced it.
//!
//! Flows are separated by more than the default burst threshold, so
//! sessionizing a generated trace recovers exactly the flows in its sidecar.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::LoadedDataset;
use crate::seed::derived_rng;
use crate::trace_model::{
    check_app_label, write_packet_log, DatasetManifest, Direction, LabeledTrace, PacketRecord,
    TraceFormat,
};
use crate::{Error, Result};

pub const MIN_PACKET_LENGTH: f64 = 1.0;
pub const MAX_PACKET_LENGTH: f64 = 1460.0;
const DEVICE_ADDR: &str = "10.0.0.2";
const SIDECAR_EXTENSION: &str = "archetypes.json";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthDist {
    pub mean: f64,
    pub std_dev: f64,
}

impl LengthDist {
    /// Normal truncated to [1, 1460] by rejection, rounded to whole bytes.
    fn sample(&self, drift: f64, rng: &mut ChaCha8Rng) -> u32 {
        let mean = self.mean * (1.0 + drift);
        let normal = Normal::new(mean, self.std_dev).expect("validated std_dev");
        for _ in 0..64 {
            let x = normal.sample(rng);
            if (MIN_PACKET_LENGTH..=MAX_PACKET_LENGTH).contains(&x) {
                return x.round() as u32;
            }
        }
        // Mean far outside the window: fall back to its nearest edge.
        mean.clamp(MIN_PACKET_LENGTH, MAX_PACKET_LENGTH).round() as u32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowArchetype {
    pub archetype_id: String,
    pub outgoing: LengthDist,
    pub incoming: LengthDist,
    /// Probability that a packet travels device to network.
    pub outgoing_ratio: f64,
    /// Inclusive packet-count range.
    pub packet_count: (usize, usize),
    pub shared: bool,
}

impl FlowArchetype {
    fn validate(&self) -> Result<()> {
        let bad =
            |what: &str| Error::InvalidConfig(format!("archetype {}: {what}", self.archetype_id));
        for d in [self.outgoing, self.incoming] {
            if !(d.mean.is_finite() && d.std_dev.is_finite() && d.std_dev >= 0.0) {
                return Err(bad("length mean and std_dev must be finite, std_dev >= 0"));
            }
        }
        if !(0.0..=1.0).contains(&self.outgoing_ratio) {
            return Err(bad("outgoing_ratio must be in [0, 1]"));
        }
        let (lo, hi) = self.packet_count;
        if lo == 0 || lo > hi {
            return Err(bad("packet_count must satisfy 1 <= min <= max"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppProfile {
    pub app_label: String,
    pub distinctive_archetypes: Vec<FlowArchetype>,
    /// Ids of library archetypes this app embeds.
    #[serde(default)]
    pub shared_archetypes: Vec<String>,
    pub flows_per_trace: usize,
    #[serde(default)]
    pub shared_flow_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapRange {
    pub min: f64,
    pub max: f64,
}

impl GapRange {
    pub const fn new(min: f64, max: f64) -> Self {
        GapRange { min, max }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.max > self.min {
            rng.random_range(self.min..self.max)
        } else {
            self.min
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.min > 0.0 && self.min <= self.max && self.max.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "{name}: need 0 < min <= max, got [{}, {}]",
                self.min, self.max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Shared archetypes any profile may reference.
    #[serde(default)]
    pub library: Vec<FlowArchetype>,
    pub profiles: Vec<AppProfile>,
    pub traces_per_app: usize,
    #[serde(default)]
    pub rng_seed: u64,
    /// Spacing of packets inside one flow, seconds.
    #[serde(default = "default_packet_gap")]
    pub packet_gap: GapRange,
    /// Start offset between flows sharing a burst, seconds.
    #[serde(default = "default_inter_flow_gap")]
    pub inter_flow_gap: GapRange,
    /// Silence between bursts, seconds.
    #[serde(default = "default_inter_burst_gap")]
    pub inter_burst_gap: f64,
    /// 1 puts every flow in its own burst.
    #[serde(default = "default_flows_per_burst")]
    pub flows_per_burst: usize,
    /// Multiplies every archetype length mean by (1 + drift_factor).
    #[serde(default)]
    pub drift_factor: f64,
}

fn default_packet_gap() -> GapRange {
    GapRange::new(0.005, 0.2)
}

fn default_inter_flow_gap() -> GapRange {
    GapRange::new(0.01, 0.3)
}

fn default_inter_burst_gap() -> f64 {
    2.0
}

fn default_flows_per_burst() -> usize {
    1
}

impl SynthConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Schema {
            path: path.to_owned(),
            message: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(Error::InvalidConfig(m));
        if self.profiles.is_empty() {
            return invalid("at least one app profile is required".into());
        }
        if self.traces_per_app == 0 {
            return invalid("traces_per_app must be at least 1".into());
        }
        self.packet_gap.validate("packet_gap")?;
        self.inter_flow_gap.validate("inter_flow_gap")?;
        if self.packet_gap.max >= 1.0 || self.inter_flow_gap.max >= 1.0 {
            return invalid("packet_gap and inter_flow_gap must stay below 1.0 s".into());
        }
        if !(self.inter_burst_gap > 1.0 && self.inter_burst_gap.is_finite()) {
            return invalid(format!(
                "inter_burst_gap must exceed 1.0 s, got {}",
                self.inter_burst_gap
            ));
        }
        if !(1..=32).contains(&self.flows_per_burst) {
            return invalid("flows_per_burst must be in 1..=32".into());
        }
        if !(self.drift_factor > -1.0 && self.drift_factor.is_finite()) {
            return invalid(format!(
                "drift_factor must exceed -1, got {}",
                self.drift_factor
            ));
        }

        let mut ids = BTreeSet::new();
        for a in &self.library {
            a.validate()?;
            if !a.shared {
                return invalid(format!(
                    "library archetype {} must be shared",
                    a.archetype_id
                ));
            }
            if !ids.insert(a.archetype_id.as_str()) {
                return invalid(format!("duplicate archetype id {}", a.archetype_id));
            }
        }
        let library: BTreeSet<&str> = ids.clone();
        let mut labels = BTreeSet::new();
        for p in &self.profiles {
            check_app_label(&p.app_label, "synthetic profile")?;
            if !labels.insert(p.app_label.as_str()) {
                return invalid(format!("duplicate app label {}", p.app_label));
            }
            if sanitize(&p.app_label).is_empty() {
                return invalid("app label must contain a file-name-safe character".into());
            }
            if p.distinctive_archetypes.is_empty() {
                return invalid(format!(
                    "{}: at least one distinctive archetype",
                    p.app_label
                ));
            }
            if p.flows_per_trace == 0 {
                return invalid(format!(
                    "{}: flows_per_trace must be at least 1",
                    p.app_label
                ));
            }
            if !(0.0..=1.0).contains(&p.shared_flow_fraction) {
                return invalid(format!(
                    "{}: shared_flow_fraction must be in [0, 1]",
                    p.app_label
                ));
            }
            for a in &p.distinctive_archetypes {
                a.validate()?;
                if a.shared {
                    return invalid(format!(
                        "{}: distinctive archetype {} is marked shared",
                        p.app_label, a.archetype_id
                    ));
                }
                if !ids.insert(a.archetype_id.as_str()) {
                    return invalid(format!("duplicate archetype id {}", a.archetype_id));
                }
            }
            if let Some(missing) = p
                .shared_archetypes
                .iter()
                .find(|s| !library.contains(s.as_str()))
            {
                return invalid(format!(
                    "{}: unknown library archetype {missing}",
                    p.app_label
                ));
            }
        }
        let sanitized: BTreeSet<String> = labels.iter().map(|l| sanitize(l)).collect();
        if sanitized.len() != labels.len() {
            return invalid("app labels collide after file-name sanitising".into());
        }
        Ok(())
    }
}

/// Ground truth for one generated flow, in the order the sessionizer emits
/// flows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowTruth {
    pub burst_index: usize,
    pub dst_addr: String,
    pub dst_port: u16,
    pub archetype_id: String,
    pub shared: bool,
    pub packet_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceGroundTruth {
    pub trace_id: String,
    pub app: String,
    pub flows: Vec<FlowTruth>,
}

pub fn sidecar_path(trace: &Path) -> PathBuf {
    trace.with_extension(SIDECAR_EXTENSION)
}

pub fn load_ground_truth(trace: &Path) -> Result<TraceGroundTruth> {
    let path = sidecar_path(trace);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Schema {
        path,
        message: e.to_string(),
    })
}

/// Sidecar entries aligned with `dataset.flows`. Fails if a trace's flows do
/// not line up with its sidecar.
pub fn dataset_ground_truth(dataset: &LoadedDataset) -> Result<Vec<FlowTruth>> {
    let mut out = Vec::with_capacity(dataset.flows.len());
    for (i, path) in dataset.trace_paths.iter().enumerate() {
        let truth = load_ground_truth(path)?;
        let flows: Vec<_> = dataset
            .flows
            .iter()
            .zip(&dataset.flow_trace)
            .filter(|(_, &t)| t == i)
            .map(|(f, _)| f)
            .collect();
        let aligned = flows.len() == truth.flows.len()
            && flows.iter().zip(&truth.flows).all(|(f, t)| {
                f.burst_index == t.burst_index
                    && f.dst_addr == t.dst_addr
                    && f.dst_port == t.dst_port
                    && f.len() == t.packet_count
            });
        if !aligned {
            return Err(Error::Dataset {
                manifest: dataset.manifest.name.clone(),
                message: format!("flows of {} do not match its sidecar", path.display()),
            });
        }
        out.extend(truth.flows);
    }
    Ok(out)
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

struct Resolved<'a> {
    archetype: &'a FlowArchetype,
    /// Position in the global archetype list; gives each archetype its own
    /// server address.
    server: usize,
}

fn server_addr(index: usize) -> String {
    format!("198.18.{}.{}", index / 256, index % 256)
}

fn generate_trace(
    config: &SynthConfig,
    profile: &AppProfile,
    library: &[Resolved],
    distinctive: &[Resolved],
    trace_id: String,
    rng: &mut ChaCha8Rng,
) -> (LabeledTrace, TraceGroundTruth) {
    let chosen: Vec<&Resolved> = (0..profile.flows_per_trace)
        .map(|_| {
            if !library.is_empty() && rng.random_bool(profile.shared_flow_fraction) {
                &library[rng.random_range(0..library.len())]
            } else {
                &distinctive[rng.random_range(0..distinctive.len())]
            }
        })
        .collect();

    let mut packets = Vec::new();
    let mut truth = Vec::new();
    let mut burst_start = 0.0;
    for (burst_index, group) in chosen.chunks(config.flows_per_burst).enumerate() {
        let mut flow_start = burst_start;
        let mut burst_end = burst_start;
        for (slot, r) in group.iter().enumerate() {
            if slot > 0 {
                flow_start += config.inter_flow_gap.sample(rng);
            }
            let a = r.archetype;
            let dst_addr = server_addr(r.server);
            let dst_port = 443 + 1000 * slot as u16;
            let local_port = 32768 + (truth.len() % 28000) as u16;
            let count = rng.random_range(a.packet_count.0..=a.packet_count.1);
            let mut t = flow_start;
            for k in 0..count {
                if k > 0 {
                    t += config.packet_gap.sample(rng);
                }
                let outgoing = rng.random_bool(a.outgoing_ratio);
                let (dist, direction) = if outgoing {
                    (a.outgoing, Direction::Outgoing)
                } else {
                    (a.incoming, Direction::Incoming)
                };
                let length = dist.sample(config.drift_factor, rng);
                let (src_addr, src_port, dst, dport) = if outgoing {
                    (
                        DEVICE_ADDR.to_owned(),
                        local_port,
                        dst_addr.clone(),
                        dst_port,
                    )
                } else {
                    (
                        dst_addr.clone(),
                        dst_port,
                        DEVICE_ADDR.to_owned(),
                        local_port,
                    )
                };
                packets.push(PacketRecord {
                    timestamp: t,
                    src_addr,
                    dst_addr: dst,
                    src_port,
                    dst_port: dport,
                    length,
                    direction,
                    is_tcp: true,
                    is_retransmission: false,
                    flags: BTreeSet::new(),
                });
            }
            burst_end = f64::max(burst_end, t);
            truth.push(FlowTruth {
                burst_index,
                dst_addr,
                dst_port,
                archetype_id: a.archetype_id.clone(),
                shared: a.shared,
                packet_count: count,
            });
        }
        burst_start = burst_end + config.inter_burst_gap;
    }
    let trace = LabeledTrace::new(profile.app_label.clone(), trace_id.clone(), packets);
    let truth = TraceGroundTruth {
        trace_id,
        app: profile.app_label.clone(),
        flows: truth,
    };
    (trace, truth)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes one packet log and sidecar per (app, trace) plus `manifest.json`
/// into `out_dir`. Trace `i` in manifest order draws from a stream derived
/// from `(rng_seed, i)`, so output does not depend on thread scheduling.
pub fn generate_dataset(config: &SynthConfig, out_dir: &Path) -> Result<DatasetManifest> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let library: BTreeMap<&str, usize> = config
        .library
        .iter()
        .enumerate()
        .map(|(i, a)| (a.archetype_id.as_str(), i))
        .collect();
    let mut server = config.library.len();
    let resolved: Vec<(Vec<Resolved>, Vec<Resolved>)> = config
        .profiles
        .iter()
        .map(|p| {
            let shared = p
                .shared_archetypes
                .iter()
                .map(|id| {
                    let i = library[id.as_str()];
                    Resolved {
                        archetype: &config.library[i],
                        server: i,
                    }
                })
                .collect();
            let distinctive = p
                .distinctive_archetypes
                .iter()
                .map(|a| {
                    server += 1;
                    Resolved {
                        archetype: a,
                        server: server - 1,
                    }
                })
                .collect();
            (shared, distinctive)
        })
        .collect();

    let jobs: Vec<(usize, usize)> = (0..config.profiles.len())
        .flat_map(|a| (0..config.traces_per_app).map(move |j| (a, j)))
        .collect();
    let traces = jobs
        .par_iter()
        .enumerate()
        .map(|(index, &(a, j))| {
            let profile = &config.profiles[a];
            let trace_id = format!("{}-{j:04}", sanitize(&profile.app_label));
            let mut rng = derived_rng(config.rng_seed, index as u64);
            let (shared, distinctive) = &resolved[a];
            let (trace, truth) =
                generate_trace(config, profile, shared, distinctive, trace_id, &mut rng);
            let file = PathBuf::from(format!("{}.jsonl", trace.trace_id));
            let path = out_dir.join(&file);
            let out = File::create(&path).map_err(|e| Error::io(&path, e))?;
            write_packet_log(&trace, TraceFormat::JsonLines, BufWriter::new(out))?;
            write_json(&sidecar_path(&path), &truth)?;
            Ok(file)
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest = DatasetManifest {
        name: format!("synthetic-seed{}", config.rng_seed),
        device: "synthetic".into(),
        os_version: "synthetic".into(),
        app_versions_tag: format!("drift{}", config.drift_factor),
        collection_time_tag: format!("seed{}", config.rng_seed),
        traces,
        base_dir: out_dir.to_owned(),
    };
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Two datasets from the same profiles with independent randomness. The
/// second one gets `config.drift_factor`; the first is undrifted.
pub fn generate_independent_pair(
    config: &SynthConfig,
    seed_a: u64,
    seed_b: u64,
    dir_a: &Path,
    dir_b: &Path,
) -> Result<(DatasetManifest, DatasetManifest)> {
    if seed_a == seed_b {
        return Err(Error::InvalidConfig(format!(
            "independent datasets need different seeds, both are {seed_a}"
        )));
    }
    let a = SynthConfig {
        rng_seed: seed_a,
        drift_factor: 0.0,
        ..config.clone()
    };
    let b = SynthConfig {
        rng_seed: seed_b,
        ..config.clone()
    };
    Ok((generate_dataset(&a, dir_a)?, generate_dataset(&b, dir_b)?))
}

const LIBRARY_SIZE: usize = 4;
const DISTINCTIVE_PER_APP: usize = 3;

/// Benchmark profiles: every app has three distinctive archetypes on a grid of
/// well separated length parameters and embeds two of four library
/// archetypes, so each library archetype appears in about half of the apps.
pub fn benchmark_config(
    n_apps: usize,
    traces_per_app: usize,
    shared_flow_fraction: f64,
    seed: u64,
) -> SynthConfig {
    let library: Vec<FlowArchetype> = (0..LIBRARY_SIZE)
        .map(|l| {
            let l = l as f64;
            FlowArchetype {
                archetype_id: format!("lib{}", l as usize),
                outgoing: LengthDist {
                    mean: 180.0 + 330.0 * l,
                    std_dev: 40.0,
                },
                incoming: LengthDist {
                    mean: 1300.0 - 280.0 * l,
                    std_dev: 60.0,
                },
                outgoing_ratio: 0.35 + 0.1 * l,
                packet_count: (6, 30),
                shared: true,
            }
        })
        .collect();
    let total = (n_apps * DISTINCTIVE_PER_APP).max(1) as f64;
    let profiles = (0..n_apps)
        .map(|a| {
            let distinctive_archetypes = (0..DISTINCTIVE_PER_APP)
                .map(|k| {
                    let g = a * DISTINCTIVE_PER_APP + k;
                    let u = g as f64 / total;
                    // Scrambled so neighbours on one axis are far apart on the other.
                    let v = ((g * 7) % (n_apps * DISTINCTIVE_PER_APP).max(1)) as f64 / total;
                    FlowArchetype {
                        archetype_id: format!("app{a:02}-{k}"),
                        outgoing: LengthDist {
                            mean: 60.0 + 1300.0 * u,
                            std_dev: 8.0 + 12.0 * u,
                        },
                        incoming: LengthDist {
                            mean: 100.0 + 1300.0 * v,
                            std_dev: 10.0 + 15.0 * v,
                        },
                        outgoing_ratio: 0.3 + 0.4 * ((g % 5) as f64 / 4.0),
                        packet_count: (8, 24 + 4 * (g % 4)),
                        shared: false,
                    }
                })
                .collect();
            AppProfile {
                app_label: format!("com.example.app{a:02}"),
                distinctive_archetypes,
                shared_archetypes: vec![
                    format!("lib{}", a % LIBRARY_SIZE),
                    format!("lib{}", (a + 1) % LIBRARY_SIZE),
                ],
                flows_per_trace: 20,
                shared_flow_fraction,
            }
        })
        .collect();
    SynthConfig {
        library,
        profiles,
        traces_per_app,
        rng_seed: seed,
        packet_gap: default_packet_gap(),
        inter_flow_gap: default_inter_flow_gap(),
        inter_burst_gap: default_inter_burst_gap(),
        flows_per_burst: 1,
        drift_factor: 0.0,
    }
}
