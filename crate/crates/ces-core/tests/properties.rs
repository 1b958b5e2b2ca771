//! Property tests for the aggregation and statistics invariants.

use chrono::NaiveDate;
use ces_core::ingest::{aggregate, DayRange, EventRecord, Grouping, NodeKind, Taxonomy};
use ces_core::net::{modularity_of_partition, BipartiteNetwork};
use ndarray::Array2;
use proptest::prelude::*;

fn taxonomy() -> Taxonomy {
    let mut t = Taxonomy::new();
    for (term, class) in [
        ("park", "urban greenspace"),
        ("garden", "urban greenspace"),
        ("mountain", "mountains"),
        ("river", "inland wetlands"),
    ] {
        t.insert(NodeKind::Feature, term, class).unwrap();
    }
    for (term, class) in [
        ("relaxing", "self care"),
        ("meditating", "self care"),
        ("hiking", "outdoor recreation"),
        ("swimming", "water sports"),
    ] {
        t.insert(NodeKind::Activity, term, class).unwrap();
    }
    t
}

const FEATURES: [&str; 4] = ["park", "garden", "mountain", "river"];
const ACTIVITIES: [&str; 4] = ["relaxing", "meditating", "hiking", "swimming"];

fn window() -> DayRange {
    DayRange::parse("2020-01-01:2020-01-10").unwrap()
}

fn record_strategy() -> impl Strategy<Value = EventRecord> {
    (0u64..10, 0usize..4, 0usize..4, 0u32..6, 1u64..4).prop_map(|(day, f, a, user, count)| {
        EventRecord {
            date: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Days::new(day),
            feature: FEATURES[f].to_string(),
            activity: ACTIVITIES[a].to_string(),
            user: format!("u{user}"),
            count,
        }
    })
}

proptest! {
    #[test]
    fn aggregation_conserves_mass(records in prop::collection::vec(record_strategy(), 0..60)) {
        let t = taxonomy();
        let total: u64 = records.iter().map(|r| r.count).sum();
        let full = aggregate(&records, &t, Grouping::Full, window()).unwrap();
        let grouped = aggregate(&records, &t, Grouping::Grouped, window()).unwrap();
        prop_assert_eq!(full.total(), total);
        prop_assert_eq!(grouped.total(), total);
    }

    #[test]
    fn pooling_commutes_with_day_marginalization(
        records in prop::collection::vec(record_strategy(), 0..60)
    ) {
        let t = taxonomy();
        let full = aggregate(&records, &t, Grouping::Full, window()).unwrap();
        let grouped = aggregate(&records, &t, Grouping::Grouped, window()).unwrap();

        // group the day-summed full matrix by class
        let full_net = BipartiteNetwork::from_counts(&full, window()).unwrap();
        let grouped_net = BipartiteNetwork::from_counts(&grouped, window()).unwrap();
        let mut pooled = Array2::<f64>::zeros((
            grouped_net.features().len(),
            grouped_net.activities().len(),
        ));
        for (fi, f) in full.features().iter().enumerate() {
            for (ai, a) in full.activities().iter().enumerate() {
                let fc = t.class_of(NodeKind::Feature, f).unwrap();
                let ac = t.class_of(NodeKind::Activity, a).unwrap();
                let gf = grouped_net.features().iter().position(|x| x == fc).unwrap();
                let ga = grouped_net.activities().iter().position(|x| x == ac).unwrap();
                pooled[[gf, ga]] += full_net.weights()[[fi, ai]];
            }
        }
        prop_assert_eq!(&pooled, grouped_net.weights());
    }

    #[test]
    fn aggregation_is_additive_over_concatenation(
        a in prop::collection::vec(record_strategy(), 0..30),
        b in prop::collection::vec(record_strategy(), 0..30),
    ) {
        let t = taxonomy();
        let mut both = a.clone();
        both.extend(b.iter().cloned());
        let combined = aggregate(&both, &t, Grouping::Full, window()).unwrap();
        let merged = aggregate(&a, &t, Grouping::Full, window())
            .unwrap()
            .merge(&aggregate(&b, &t, Grouping::Full, window()).unwrap())
            .unwrap();
        prop_assert_eq!(combined.counts(), merged.counts());
    }

    #[test]
    fn modularity_value_invariant_under_relabeling(
        weights in prop::collection::vec(0u8..5, 12),
        perm_seed in 0u32..1000,
        rows in prop::collection::vec(0u32..3, 3),
        cols in prop::collection::vec(0u32..3, 4),
    ) {
        let w = Array2::from_shape_vec((3, 4), weights.iter().map(|&v| v as f64).collect()).unwrap();
        prop_assume!(w.sum() > 0.0);
        let q = modularity_of_partition(&w, &rows, &cols);
        // relabel modules by a permutation of {0,1,2}
        let perms = [[0u32, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let p = perms[(perm_seed as usize) % 6];
        let rows2: Vec<u32> = rows.iter().map(|&l| p[l as usize]).collect();
        let cols2: Vec<u32> = cols.iter().map(|&l| p[l as usize]).collect();
        let q2 = modularity_of_partition(&w, &rows2, &cols2);
        prop_assert!((q - q2).abs() < 1e-12);
    }

    #[test]
    fn single_module_partition_has_zero_modularity(
        weights in prop::collection::vec(0u8..7, 12),
    ) {
        let w = Array2::from_shape_vec((4, 3), weights.iter().map(|&v| v as f64).collect()).unwrap();
        prop_assume!(w.sum() > 0.0);
        let q = modularity_of_partition(&w, &[1, 1, 1, 1], &[1, 1, 1]);
        prop_assert!(q.abs() < 1e-12);
    }
}
