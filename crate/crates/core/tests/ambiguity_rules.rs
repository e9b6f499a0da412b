use std::collections::BTreeSet;

use flowprint::ambiguity::{train_reinforced, AmbiguityConfig};
use flowprint::dataset::load_dataset;
use flowprint::features::{build_feature_matrix, FeatureMatrix, MadMode};
use flowprint::learn::{ForestParams, LearnConfig};
use flowprint::sessionizer::SessionizerConfig;
use flowprint::synth::{benchmark_config, dataset_ground_truth, generate_dataset, FlowTruth};
use flowprint::AMBIGUOUS_LABEL;

fn synthetic(
    n_apps: usize,
    traces: usize,
    shared: f64,
    seed: u64,
) -> (FeatureMatrix, Vec<FlowTruth>) {
    let dir = tempfile::tempdir().unwrap();
    let manifest =
        generate_dataset(&benchmark_config(n_apps, traces, shared, seed), dir.path()).unwrap();
    let data = load_dataset(&manifest, &SessionizerConfig::default()).unwrap();
    let truth = dataset_ground_truth(&data).unwrap();
    (
        build_feature_matrix(&data.flows, MadMode::Median).unwrap(),
        truth,
    )
}

fn learn() -> LearnConfig {
    LearnConfig {
        forest: ForestParams {
            n_trees: 40,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[test]
fn relabeling_follows_the_two_stage_rule() {
    let (matrix, _) = synthetic(5, 2, 0.4, 3);
    let matrix = matrix.subset(&(0..200).collect::<Vec<_>>());
    let r = train_reinforced(
        &matrix,
        &AmbiguityConfig {
            split_fraction: 0.5,
            rng_seed: 5,
        },
        &learn(),
    )
    .unwrap();
    let prelim: BTreeSet<usize> = r.preliminary_rows.iter().copied().collect();
    let reinf: BTreeSet<usize> = r.reinforced_rows.iter().copied().collect();
    assert!(prelim.is_disjoint(&reinf));
    assert_eq!(prelim.len() + reinf.len(), 200);
    for (&i, label) in r.reinforced_rows.iter().zip(&r.reinforced_labels) {
        let (predicted, _) = r.preliminary.predict(&matrix.rows[i]).unwrap();
        if predicted == matrix.labels[i] {
            assert_eq!(label, &matrix.labels[i]);
        } else {
            assert_eq!(label, AMBIGUOUS_LABEL);
        }
    }
}

#[test]
fn relabels_come_from_shared_archetypes() {
    let (matrix, truth) = synthetic(6, 6, 0.3, 4);
    let r = train_reinforced(
        &matrix,
        &AmbiguityConfig {
            split_fraction: 0.5,
            rng_seed: 1,
        },
        &learn(),
    )
    .unwrap();
    let relabeled: Vec<usize> = r
        .reinforced_rows
        .iter()
        .zip(&r.reinforced_labels)
        .filter(|(_, l)| *l == AMBIGUOUS_LABEL)
        .map(|(&i, _)| i)
        .collect();
    assert_eq!(relabeled.len(), r.relabel_stats.relabeled);
    assert!(!relabeled.is_empty());
    let shared = relabeled.iter().filter(|&&i| truth[i].shared).count();
    assert!(
        shared as f64 >= 0.7 * relabeled.len() as f64,
        "{shared} of {}",
        relabeled.len()
    );
}

#[test]
fn disjoint_archetypes_are_rarely_relabeled() {
    let (matrix, _) = synthetic(6, 6, 0.0, 4);
    let r = train_reinforced(
        &matrix,
        &AmbiguityConfig {
            split_fraction: 0.5,
            rng_seed: 1,
        },
        &learn(),
    )
    .unwrap();
    let frac = r.relabel_stats.relabeled as f64 / r.relabel_stats.total as f64;
    assert!(frac < 0.1, "relabeled fraction {frac}");
}
