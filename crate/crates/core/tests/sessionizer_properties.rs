mod support;

use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn bursts_and_flows_partition_the_trace(seed in any::<u64>(), threshold in 0.05f64..3.0) {
        let trace = support::random_trace(seed);
        prop_assert_eq!(support::check_partition(&trace, threshold), Ok(()));
    }

    #[test]
    fn larger_threshold_merges_bursts(seed in any::<u64>(), a in 0.05f64..3.0, b in 0.05f64..3.0) {
        let trace = support::random_trace(seed);
        prop_assert_eq!(support::check_monotone(&trace, a.min(b), a.max(b)), Ok(()));
    }
}

#[test]
fn default_threshold_on_fixed_traces() {
    for seed in 0..200 {
        let trace = support::random_trace(seed);
        support::check_partition(&trace, 1.0).unwrap();
        support::check_monotone(&trace, 0.5, 1.0).unwrap();
    }
}
