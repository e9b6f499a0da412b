use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use flowprint::dataset::load_dataset;
use flowprint::sessionizer::{sessionize, SessionizerConfig};
use flowprint::synth::{
    benchmark_config, dataset_ground_truth, generate_dataset, generate_independent_pair,
    load_ground_truth,
};
use flowprint::trace_model::{
    filter_clean_tcp, parse_packet_log, DatasetManifest, Direction, TraceFormat,
};

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn generator_is_an_oracle_for_the_sessionizer() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate_dataset(&benchmark_config(4, 3, 0.3, 7), dir.path()).unwrap();
    assert_eq!(manifest.traces.len(), 12);
    for path in manifest.trace_paths() {
        let trace = parse_packet_log(&path, TraceFormat::JsonLines).unwrap();
        let cleaned = filter_clean_tcp(trace.clone());
        assert_eq!(cleaned, trace);
        let truth = load_ground_truth(&path).unwrap();
        assert_eq!(truth.app, trace.app_label);
        let flows = sessionize(&trace, &SessionizerConfig::default());
        assert_eq!(flows.len(), truth.flows.len());
        for (f, t) in flows.iter().zip(&truth.flows) {
            assert_eq!(
                (f.burst_index, &f.dst_addr, f.dst_port, f.len()),
                (t.burst_index, &t.dst_addr, t.dst_port, t.packet_count)
            );
            assert!(f.packets.iter().all(|p| (1..=1460).contains(&p.length)));
        }
    }
}

#[test]
fn overlapping_flows_are_recovered() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = benchmark_config(3, 2, 0.5, 8);
    config.flows_per_burst = 4;
    let manifest = generate_dataset(&config, dir.path()).unwrap();
    let data = load_dataset(&manifest, &SessionizerConfig::default()).unwrap();
    let truth = dataset_ground_truth(&data).unwrap();
    assert_eq!(truth.len(), data.flows.len());
    assert!(data
        .flows
        .iter()
        .any(|f| f.burst_index == 0 && f.dst_port != 443));
}

#[test]
fn same_seed_gives_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let config = benchmark_config(3, 4, 0.3, 11);
    generate_dataset(&config, a.path()).unwrap();
    generate_dataset(&config, b.path()).unwrap();
    assert_eq!(read_dir_bytes(a.path()), read_dir_bytes(b.path()));
}

#[test]
fn zero_shared_fraction_has_no_shared_flows() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate_dataset(&benchmark_config(4, 3, 0.0, 2), dir.path()).unwrap();
    for path in manifest.trace_paths() {
        assert!(load_ground_truth(&path)
            .unwrap()
            .flows
            .iter()
            .all(|f| !f.shared));
    }
}

#[test]
fn ten_apps_twenty_traces() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate_dataset(&benchmark_config(10, 20, 0.3, 1), dir.path()).unwrap();
    assert_eq!(manifest.traces.len(), 200);
    let reloaded = DatasetManifest::load(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(reloaded.traces, manifest.traces);
    assert!(reloaded.traces.iter().all(|t| t.is_relative()));
}

fn flow_signatures(manifest: &DatasetManifest) -> (BTreeSet<String>, HashSet<Vec<(bool, u32)>>) {
    let data = load_dataset(manifest, &SessionizerConfig::default()).unwrap();
    let labels = data.labels().into_iter().map(str::to_owned).collect();
    let sigs = data
        .flows
        .iter()
        .map(|f| {
            f.packets
                .iter()
                .map(|p| (p.direction == Direction::Outgoing, p.length))
                .collect()
        })
        .collect();
    (labels, sigs)
}

#[test]
fn independent_pair_shares_no_flows() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let config = benchmark_config(10, 20, 0.3, 0);
    let (ma, mb) = generate_independent_pair(&config, 1, 2, a.path(), b.path()).unwrap();
    assert_ne!(ma.name, mb.name);
    let (la, sa) = flow_signatures(&ma);
    let (lb, sb) = flow_signatures(&mb);
    assert_eq!(la, lb);
    assert_eq!(sa.intersection(&sb).count(), 0);
    assert!(generate_independent_pair(&config, 3, 3, a.path(), b.path()).is_err());
}

fn mean_outgoing(manifest: &DatasetManifest) -> f64 {
    let data = load_dataset(manifest, &SessionizerConfig::default()).unwrap();
    let lens: Vec<f64> = data
        .flows
        .iter()
        .flat_map(|f| &f.packets)
        .filter(|p| p.direction == Direction::Outgoing)
        .map(|p| f64::from(p.length))
        .collect();
    lens.iter().sum::<f64>() / lens.len() as f64
}

#[test]
fn drift_shifts_length_means() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut config = benchmark_config(4, 4, 0.0, 0);
    config.drift_factor = 0.1;
    let (ma, mb) = generate_independent_pair(&config, 1, 2, a.path(), b.path()).unwrap();
    let ratio = mean_outgoing(&mb) / mean_outgoing(&ma);
    assert!((1.05..1.15).contains(&ratio), "ratio {ratio}");
}

#[test]
fn shared_archetypes_are_identical_across_apps() {
    let config = benchmark_config(10, 1, 0.3, 0);
    for p in &config.profiles {
        for id in &p.shared_archetypes {
            let found: Vec<_> = config
                .library
                .iter()
                .filter(|a| &a.archetype_id == id)
                .collect();
            assert_eq!(found.len(), 1);
            assert!(found[0].shared);
        }
        assert!(p.distinctive_archetypes.iter().all(|a| !a.shared));
    }
}
