//! User-based network weights and new-user turnover dynamics.
//!
//! A user is "new" on day `d` when `d` is their first in-scope appearance
//! across the warmup and analysis windows. Scope is either all events or
//! one feature-class x activity-class pair. Days with zero active users
//! emit a null ratio, not zero.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use ndarray::Array2;
use thiserror::Error;

use crate::ingest::{DayRange, EventRecord, Grouping, NodeKind, Taxonomy};
use crate::net::BipartiteNetwork;

#[derive(Error, Debug)]
pub enum TurnoverError {
    #[error("record on {date} has an empty user pseudonym")]
    MissingUser { date: NaiveDate },
    #[error("unknown {kind} class {class:?}")]
    UnknownClass { kind: NodeKind, class: String },
    #[error("warmup {warmup} must precede the window {window}")]
    WarmupOverlapsWindow { warmup: DayRange, window: DayRange },
    #[error("term {term:?} missing from taxonomy")]
    UnmappedTerm { term: String },
}

/// What counts as an in-scope event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TurnoverScope {
    /// Any event.
    Global,
    /// Events whose grouped cell matches the class pair.
    ClassPair {
        feature_class: String,
        activity_class: String,
    },
}

impl std::fmt::Display for TurnoverScope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TurnoverScope::Global => write!(f, "all"),
            TurnoverScope::ClassPair {
                feature_class,
                activity_class,
            } => write!(f, "{feature_class} x {activity_class}"),
        }
    }
}

/// One day of turnover accounting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurnoverDay {
    pub date: NaiveDate,
    pub active_users: u64,
    pub new_users: u64,
    /// `new / active`; `None` on days with no active users.
    pub ratio: Option<f64>,
}

/// Daily new-user ratios over an analysis window.
#[derive(Debug, Clone)]
pub struct TurnoverSeries {
    pub scope: TurnoverScope,
    pub window: DayRange,
    pub days: Vec<TurnoverDay>,
}

impl TurnoverSeries {
    /// Ratio values with nulls as NaN, for spectral analysis.
    pub fn ratio_series(&self) -> crate::spectral::TimeSeries {
        let values = self
            .days
            .iter()
            .map(|d| d.ratio.unwrap_or(f64::NAN))
            .collect();
        crate::spectral::TimeSeries::new(self.window.start, values)
    }

    /// Ratio values with nulls as zero.
    pub fn ratio_series_zero_filled(&self) -> crate::spectral::TimeSeries {
        let values = self
            .days
            .iter()
            .map(|d| d.ratio.unwrap_or(0.0))
            .collect();
        crate::spectral::TimeSeries::new(self.window.start, values)
    }
}

fn in_scope(
    record: &EventRecord,
    taxonomy: &Taxonomy,
    scope: &TurnoverScope,
) -> Result<bool, TurnoverError> {
    match scope {
        TurnoverScope::Global => Ok(true),
        TurnoverScope::ClassPair {
            feature_class,
            activity_class,
        } => {
            let f = taxonomy
                .class_of(NodeKind::Feature, &record.feature)
                .ok_or_else(|| TurnoverError::UnmappedTerm {
                    term: record.feature.clone(),
                })?;
            let a = taxonomy
                .class_of(NodeKind::Activity, &record.activity)
                .ok_or_else(|| TurnoverError::UnmappedTerm {
                    term: record.activity.clone(),
                })?;
            Ok(f == feature_class && a == activity_class)
        }
    }
}

/// Daily proportion of users appearing in scope for the first time.
///
/// The seen-set accumulates over `warmup` (when given) and then over the
/// window in date order, so re-running with a longer warmup can only lower
/// each day's ratio.
pub fn new_user_ratio(
    records: &[EventRecord],
    taxonomy: &Taxonomy,
    scope: TurnoverScope,
    window: DayRange,
    warmup: Option<DayRange>,
) -> Result<TurnoverSeries, TurnoverError> {
    if let TurnoverScope::ClassPair {
        feature_class,
        activity_class,
    } = &scope
    {
        if !taxonomy.classes(NodeKind::Feature).contains(feature_class) {
            return Err(TurnoverError::UnknownClass {
                kind: NodeKind::Feature,
                class: feature_class.clone(),
            });
        }
        if !taxonomy.classes(NodeKind::Activity).contains(activity_class) {
            return Err(TurnoverError::UnknownClass {
                kind: NodeKind::Activity,
                class: activity_class.clone(),
            });
        }
    }
    if let Some(warmup) = warmup {
        if warmup.end >= window.start {
            return Err(TurnoverError::WarmupOverlapsWindow { warmup, window });
        }
    }

    // Bucket in-scope user sightings per day (records need not be sorted).
    let mut per_day: BTreeMap<NaiveDate, BTreeSet<&str>> = BTreeMap::new();
    for record in records {
        if record.user.is_empty() {
            return Err(TurnoverError::MissingUser { date: record.date });
        }
        let relevant = warmup.map(|w| w.contains(record.date)).unwrap_or(false)
            || window.contains(record.date);
        if !relevant {
            continue;
        }
        if in_scope(record, taxonomy, &scope)? {
            per_day.entry(record.date).or_default().insert(&record.user);
        }
    }

    let mut seen: BTreeSet<String> = BTreeSet::new();
    if let Some(warmup) = warmup {
        for (_, users) in per_day.range(warmup.start..=warmup.end) {
            for user in users {
                seen.insert((*user).to_string());
            }
        }
    }

    let mut days = Vec::with_capacity(window.len());
    for date in window.days() {
        let users = per_day.get(&date);
        let (active, new) = match users {
            None => (0u64, 0u64),
            Some(users) => {
                let active = users.len() as u64;
                let mut new = 0u64;
                for user in users {
                    if seen.insert((*user).to_string()) {
                        new += 1;
                    }
                }
                (active, new)
            }
        };
        days.push(TurnoverDay {
            date,
            active_users: active,
            new_users: new,
            ratio: (active > 0).then(|| new as f64 / active as f64),
        });
    }

    Ok(TurnoverSeries {
        scope,
        window,
        days,
    })
}

/// Bipartite network weighted by distinct users per cell: `W[f,a]` counts
/// users with at least one record on `(f, a)` inside the window. Grouped
/// cells count users distinct at the pooled level.
pub fn user_network(
    records: &[EventRecord],
    taxonomy: &Taxonomy,
    grouping: Grouping,
    window: DayRange,
) -> Result<BipartiteNetwork, TurnoverError> {
    let (features, activities) = match grouping {
        Grouping::Full => (
            taxonomy.terms(NodeKind::Feature),
            taxonomy.terms(NodeKind::Activity),
        ),
        Grouping::Grouped => (
            taxonomy.classes(NodeKind::Feature),
            taxonomy.classes(NodeKind::Activity),
        ),
    };
    let f_index: BTreeMap<&str, usize> = features
        .iter()
        .enumerate()
        .map(|(i, f)| (f.as_str(), i))
        .collect();
    let a_index: BTreeMap<&str, usize> = activities
        .iter()
        .enumerate()
        .map(|(i, a)| (a.as_str(), i))
        .collect();

    let mut cell_users: BTreeMap<(usize, usize), BTreeSet<&str>> = BTreeMap::new();
    for record in records {
        if !window.contains(record.date) {
            continue;
        }
        if record.user.is_empty() {
            return Err(TurnoverError::MissingUser { date: record.date });
        }
        let (f_label, a_label): (&str, &str) = match grouping {
            Grouping::Full => (&record.feature, &record.activity),
            Grouping::Grouped => (
                taxonomy
                    .class_of(NodeKind::Feature, &record.feature)
                    .ok_or_else(|| TurnoverError::UnmappedTerm {
                        term: record.feature.clone(),
                    })?,
                taxonomy
                    .class_of(NodeKind::Activity, &record.activity)
                    .ok_or_else(|| TurnoverError::UnmappedTerm {
                        term: record.activity.clone(),
                    })?,
            ),
        };
        let (Some(&f), Some(&a)) = (f_index.get(f_label), a_index.get(a_label)) else {
            return Err(TurnoverError::UnmappedTerm {
                term: f_label.to_string(),
            });
        };
        cell_users.entry((f, a)).or_default().insert(&record.user);
    }

    let mut weights = Array2::<f64>::zeros((features.len(), activities.len()));
    for ((f, a), users) in cell_users {
        weights[[f, a]] = users.len() as f64;
    }
    Ok(BipartiteNetwork::new(features, activities, weights).expect("axes match weights"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{NodeKind, Taxonomy};

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn taxonomy() -> Taxonomy {
        let mut t = Taxonomy::new();
        t.insert(NodeKind::Feature, "park", "urban greenspace").unwrap();
        t.insert(NodeKind::Feature, "mountain", "mountains").unwrap();
        t.insert(NodeKind::Activity, "relaxing", "self care").unwrap();
        t.insert(NodeKind::Activity, "hiking", "outdoor recreation").unwrap();
        t
    }

    fn record(day: &str, feature: &str, activity: &str, user: &str) -> EventRecord {
        EventRecord {
            date: date(day),
            feature: feature.into(),
            activity: activity.into(),
            user: user.into(),
            count: 1,
        }
    }

    #[test]
    fn first_day_everyone_is_new() {
        let records = vec![
            record("2020-01-01", "park", "relaxing", "u1"),
            record("2020-01-01", "park", "relaxing", "u2"),
        ];
        let window = DayRange::parse("2020-01-01:2020-01-02").unwrap();
        let series =
            new_user_ratio(&records, &taxonomy(), TurnoverScope::Global, window, None).unwrap();
        assert_eq!(series.days[0].ratio, Some(1.0));
        assert_eq!(series.days[1].ratio, None); // silent day
    }

    #[test]
    fn returning_users_drive_ratio_to_zero() {
        let mut records = Vec::new();
        for day in ["2020-01-01", "2020-01-02", "2020-01-03"] {
            records.push(record(day, "park", "relaxing", "u1"));
        }
        let window = DayRange::parse("2020-01-01:2020-01-03").unwrap();
        let series =
            new_user_ratio(&records, &taxonomy(), TurnoverScope::Global, window, None).unwrap();
        assert_eq!(series.days[0].ratio, Some(1.0));
        assert_eq!(series.days[1].ratio, Some(0.0));
        assert_eq!(series.days[2].ratio, Some(0.0));
    }

    #[test]
    fn half_turnover_fixture() {
        // {u1,u2} day 1, {u2,u3} day 2: day-2 ratio is 1/2.
        let records = vec![
            record("2020-01-01", "park", "relaxing", "u1"),
            record("2020-01-01", "park", "relaxing", "u2"),
            record("2020-01-02", "park", "relaxing", "u2"),
            record("2020-01-02", "park", "relaxing", "u3"),
        ];
        let window = DayRange::parse("2020-01-01:2020-01-02").unwrap();
        let series =
            new_user_ratio(&records, &taxonomy(), TurnoverScope::Global, window, None).unwrap();
        assert_eq!(series.days[1].active_users, 2);
        assert_eq!(series.days[1].new_users, 1);
        assert_eq!(series.days[1].ratio, Some(0.5));
    }

    #[test]
    fn warmup_suppresses_known_users() {
        let records = vec![
            record("2019-12-30", "park", "relaxing", "u1"),
            record("2020-01-01", "park", "relaxing", "u1"),
            record("2020-01-01", "park", "relaxing", "u2"),
        ];
        let window = DayRange::parse("2020-01-01:2020-01-01").unwrap();
        let warmup = DayRange::parse("2019-12-01:2019-12-31").unwrap();
        let series = new_user_ratio(
            &records,
            &taxonomy(),
            TurnoverScope::Global,
            window,
            Some(warmup),
        )
        .unwrap();
        assert_eq!(series.days[0].active_users, 2);
        assert_eq!(series.days[0].new_users, 1); // only u2
    }

    #[test]
    fn warmup_must_precede_window() {
        let window = DayRange::parse("2020-01-01:2020-01-31").unwrap();
        let warmup = DayRange::parse("2019-12-01:2020-01-05").unwrap();
        let err = new_user_ratio(&[], &taxonomy(), TurnoverScope::Global, window, Some(warmup))
            .unwrap_err();
        assert!(matches!(err, TurnoverError::WarmupOverlapsWindow { .. }));
    }

    #[test]
    fn pair_scope_ignores_other_cells() {
        let records = vec![
            record("2020-01-01", "mountain", "hiking", "u1"),
            record("2020-01-02", "park", "relaxing", "u1"),
        ];
        let window = DayRange::parse("2020-01-01:2020-01-02").unwrap();
        let scope = TurnoverScope::ClassPair {
            feature_class: "urban greenspace".into(),
            activity_class: "self care".into(),
        };
        let series = new_user_ratio(&records, &taxonomy(), scope, window, None).unwrap();
        // u1's hike does not count against the pair scope: day 2 is their
        // first pair-scope appearance.
        assert_eq!(series.days[0].active_users, 0);
        assert_eq!(series.days[1].new_users, 1);
        assert_eq!(series.days[1].ratio, Some(1.0));
    }

    #[test]
    fn unknown_scope_class_is_error() {
        let window = DayRange::parse("2020-01-01:2020-01-02").unwrap();
        let scope = TurnoverScope::ClassPair {
            feature_class: "volcano".into(),
            activity_class: "self care".into(),
        };
        assert!(matches!(
            new_user_ratio(&[], &taxonomy(), scope, window, None),
            Err(TurnoverError::UnknownClass { .. })
        ));
    }

    #[test]
    fn seen_set_is_monotone_and_new_users_sum() {
        let records = vec![
            record("2020-01-01", "park", "relaxing", "u1"),
            record("2020-01-02", "park", "relaxing", "u2"),
            record("2020-01-02", "park", "relaxing", "u1"),
            record("2020-01-03", "park", "relaxing", "u3"),
            record("2020-01-03", "park", "relaxing", "u2"),
        ];
        let window = DayRange::parse("2020-01-01:2020-01-03").unwrap();
        let series = new_user_ratio(
            &records,
            &taxonomy(),
            TurnoverScope::Global,
            window,
            None,
        )
        .unwrap();
        let total_new: u64 = series.days.iter().map(|d| d.new_users).sum();
        assert_eq!(total_new, 3); // u1, u2, u3 each first-seen once
        for day in &series.days {
            assert!(day.new_users <= day.active_users);
        }
    }

    #[test]
    fn extending_warmup_cannot_raise_ratios() {
        let records = vec![
            record("2019-12-15", "park", "relaxing", "u2"),
            record("2020-01-01", "park", "relaxing", "u1"),
            record("2020-01-01", "park", "relaxing", "u2"),
            record("2020-01-02", "park", "relaxing", "u3"),
        ];
        let window = DayRange::parse("2020-01-01:2020-01-02").unwrap();
        let short = DayRange::parse("2019-12-20:2019-12-31").unwrap();
        let long = DayRange::parse("2019-12-01:2019-12-31").unwrap();
        let a = new_user_ratio(&records, &taxonomy(), TurnoverScope::Global, window, Some(short))
            .unwrap();
        let b = new_user_ratio(&records, &taxonomy(), TurnoverScope::Global, window, Some(long))
            .unwrap();
        for (x, y) in a.days.iter().zip(b.days.iter()) {
            match (x.ratio, y.ratio) {
                (Some(rx), Some(ry)) => assert!(ry <= rx + 1e-15),
                (None, None) => {}
                other => panic!("ratio definedness changed: {other:?}"),
            }
        }
    }

    #[test]
    fn user_network_counts_distinct_users() {
        let mut records = vec![];
        // one prolific user on (park, relaxing)
        for _ in 0..100 {
            records.push(record("2020-01-01", "park", "relaxing", "u1"));
        }
        // three users once each on (mountain, hiking)
        for u in ["a", "b", "c"] {
            records.push(record("2020-01-02", "mountain", "hiking", u));
        }
        let window = DayRange::parse("2020-01-01:2020-01-02").unwrap();
        let net = user_network(&records, &taxonomy(), Grouping::Full, window).unwrap();
        let f = net.features().iter().position(|s| s == "park").unwrap();
        let a = net.activities().iter().position(|s| s == "relaxing").unwrap();
        assert_eq!(net.weights()[[f, a]], 1.0);
        let f = net.features().iter().position(|s| s == "mountain").unwrap();
        let a = net.activities().iter().position(|s| s == "hiking").unwrap();
        assert_eq!(net.weights()[[f, a]], 3.0);
    }

    #[test]
    fn user_network_hand_counted_fixture() {
        // 5 users across 3 cells; u1 hits two cells, u2 repeats on one.
        let records = vec![
            record("2020-01-01", "park", "relaxing", "u1"),
            record("2020-01-01", "park", "relaxing", "u2"),
            record("2020-01-02", "park", "relaxing", "u2"),
            record("2020-01-02", "park", "hiking", "u1"),
            record("2020-01-02", "park", "hiking", "u3"),
            record("2020-01-03", "mountain", "hiking", "u4"),
            record("2020-01-03", "mountain", "hiking", "u5"),
        ];
        let window = DayRange::parse("2020-01-01:2020-01-03").unwrap();
        let net = user_network(&records, &taxonomy(), Grouping::Full, window).unwrap();
        let idx = |f: &str, a: &str| {
            (
                net.features().iter().position(|s| s == f).unwrap(),
                net.activities().iter().position(|s| s == a).unwrap(),
            )
        };
        let (f, a) = idx("park", "relaxing");
        assert_eq!(net.weights()[[f, a]], 2.0);
        let (f, a) = idx("park", "hiking");
        assert_eq!(net.weights()[[f, a]], 2.0);
        let (f, a) = idx("mountain", "hiking");
        assert_eq!(net.weights()[[f, a]], 2.0);
        assert_eq!(net.total_weight(), 6.0);
    }
}
