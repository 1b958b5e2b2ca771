//! Event and taxonomy ingestion.
//!
//! Event files are CSV (`date,feature,activity,user[,count]`, header
//! required) or JSON lines with the same keys. Taxonomy files are CSV
//! `kind,term,class` where `kind` is `feature` or `activity`. All term
//! matching is case-folded exact matching; repertoires are assumed to be
//! normalized token lists already.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use chrono::NaiveDate;
use ndarray::{Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Row { line: usize, reason: String },
    #[error("taxonomy: term {term:?} mapped to both {first:?} and {second:?}")]
    ConflictingClass {
        term: String,
        first: String,
        second: String,
    },
    #[error("taxonomy: {0}")]
    Taxonomy(String),
    #[error("empty analysis window")]
    EmptyWindow,
    #[error("window start {start} is after end {end}")]
    InvertedWindow { start: NaiveDate, end: NaiveDate },
    #[error("{0}")]
    Format(String),
}

/// Inclusive range of calendar days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DayRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self, IngestError> {
        if start > end {
            return Err(IngestError::InvertedWindow { start, end });
        }
        Ok(Self { start, end })
    }

    /// Parse `"YYYY-MM-DD:YYYY-MM-DD"`.
    pub fn parse(text: &str) -> Result<Self, IngestError> {
        let (a, b) = text
            .split_once(':')
            .ok_or_else(|| IngestError::Format(format!("window {text:?} is not START:END")))?;
        let parse = |s: &str| {
            NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
                .map_err(|e| IngestError::Format(format!("bad date {s:?}: {e}")))
        };
        Self::new(parse(a)?, parse(b)?)
    }

    pub fn contains(&self, day: NaiveDate) -> bool {
        self.start <= day && day <= self.end
    }

    /// Number of days in the range, inclusive.
    pub fn len(&self) -> usize {
        (self.end - self.start).num_days() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false // by construction start <= end
    }

    pub fn days(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.start.iter_days().take(self.len())
    }

    pub fn index_of(&self, day: NaiveDate) -> Option<usize> {
        self.contains(day)
            .then(|| (day - self.start).num_days() as usize)
    }
}

impl fmt::Display for DayRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.start, self.end)
    }
}

/// One observed co-occurrence: a feature and an activity mentioned together
/// by a user on a calendar day. `count` is 1 for raw streams and larger for
/// pre-aggregated files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub date: NaiveDate,
    pub feature: String,
    pub activity: String,
    pub user: String,
    pub count: u64,
}

/// Which side of the bipartite structure a term belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Feature,
    Activity,
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeKind::Feature => write!(f, "feature"),
            NodeKind::Activity => write!(f, "activity"),
        }
    }
}

/// Term-to-class mapping for both node kinds. Every term maps to exactly
/// one class; the mapping is total over the repertoire.
#[derive(Debug, Clone, Default)]
pub struct Taxonomy {
    features: BTreeMap<String, String>,
    activities: BTreeMap<String, String>,
}

impl Taxonomy {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert one term->class pair, rejecting conflicting duplicates.
    pub fn insert(
        &mut self,
        kind: NodeKind,
        term: &str,
        class: &str,
    ) -> Result<(), IngestError> {
        let term = term.trim().to_lowercase();
        let class = class.trim().to_lowercase();
        if term.is_empty() {
            return Err(IngestError::Taxonomy("empty term".into()));
        }
        if class.is_empty() {
            return Err(IngestError::Taxonomy(format!("term {term:?} has empty class")));
        }
        let map = match kind {
            NodeKind::Feature => &mut self.features,
            NodeKind::Activity => &mut self.activities,
        };
        if let Some(existing) = map.get(&term) {
            if *existing != class {
                return Err(IngestError::ConflictingClass {
                    term,
                    first: existing.clone(),
                    second: class,
                });
            }
            return Ok(());
        }
        map.insert(term, class);
        Ok(())
    }

    pub fn class_of(&self, kind: NodeKind, term: &str) -> Option<&str> {
        let map = match kind {
            NodeKind::Feature => &self.features,
            NodeKind::Activity => &self.activities,
        };
        map.get(term).map(String::as_str)
    }

    /// Sorted repertoire terms of one kind.
    pub fn terms(&self, kind: NodeKind) -> Vec<String> {
        match kind {
            NodeKind::Feature => self.features.keys().cloned().collect(),
            NodeKind::Activity => self.activities.keys().cloned().collect(),
        }
    }

    /// Sorted distinct class labels of one kind.
    pub fn classes(&self, kind: NodeKind) -> Vec<String> {
        let map = match kind {
            NodeKind::Feature => &self.features,
            NodeKind::Activity => &self.activities,
        };
        let set: BTreeSet<&String> = map.values().collect();
        set.into_iter().cloned().collect()
    }

    /// Terms per class, sorted by class label.
    pub fn cardinality_report(&self, kind: NodeKind) -> Vec<(String, usize)> {
        let map = match kind {
            NodeKind::Feature => &self.features,
            NodeKind::Activity => &self.activities,
        };
        let mut counts: BTreeMap<&String, usize> = BTreeMap::new();
        for class in map.values() {
            *counts.entry(class).or_insert(0) += 1;
        }
        counts.into_iter().map(|(c, n)| (c.clone(), n)).collect()
    }

    pub fn term_count(&self, kind: NodeKind) -> usize {
        match kind {
            NodeKind::Feature => self.features.len(),
            NodeKind::Activity => self.activities.len(),
        }
    }

    /// Check declared repertoire/class cardinalities, e.g. 39 terms in 11
    /// classes on the feature side.
    pub fn check_cardinalities(
        &self,
        kind: NodeKind,
        terms: usize,
        classes: usize,
    ) -> Result<(), IngestError> {
        let have_terms = self.term_count(kind);
        let have_classes = self.classes(kind).len();
        if have_terms != terms || have_classes != classes {
            return Err(IngestError::Taxonomy(format!(
                "{kind} side has {have_terms} terms in {have_classes} classes, declared {terms}/{classes}"
            )));
        }
        Ok(())
    }
}

/// Load a `kind,term,class` CSV. Header row required. Classes must be
/// non-empty and every term must map to a single class.
pub fn load_taxonomy(path: &Path) -> Result<Taxonomy, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut taxonomy = Taxonomy::new();
    for (idx, row) in reader.records().enumerate() {
        let line = idx + 2; // 1-based, after the header
        let row = row.map_err(|e| IngestError::Row {
            line,
            reason: e.to_string(),
        })?;
        if row.len() < 3 {
            return Err(IngestError::Row {
                line,
                reason: format!("expected kind,term,class, got {} fields", row.len()),
            });
        }
        let kind = match row[0].to_lowercase().as_str() {
            "feature" => NodeKind::Feature,
            "activity" => NodeKind::Activity,
            other => {
                return Err(IngestError::Row {
                    line,
                    reason: format!("kind {other:?} is not feature|activity"),
                })
            }
        };
        taxonomy.insert(kind, &row[1], &row[2])?;
    }
    if taxonomy.term_count(NodeKind::Feature) == 0 || taxonomy.term_count(NodeKind::Activity) == 0 {
        return Err(IngestError::Taxonomy(
            "taxonomy must cover both features and activities".into(),
        ));
    }
    Ok(taxonomy)
}

/// What to do with rows whose terms are absent from the repertoire or whose
/// date falls outside the configured window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnknownTermPolicy {
    /// Drop the row and record a warning with its line number.
    #[default]
    Skip,
    /// Abort parsing at the first offending row.
    Strict,
}

/// A skipped row, with the 1-based line it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseWarning {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct ParseOutcome {
    pub records: Vec<EventRecord>,
    pub warnings: Vec<ParseWarning>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    pub policy: UnknownTermPolicy,
    /// When set, rows dated outside the window are policy-handled.
    pub window: Option<DayRange>,
}

/// Parse an event file, validating every row against the repertoire.
///
/// Files ending in `.jsonl` or `.ndjson` are treated as JSON lines;
/// everything else as CSV with a header.
pub fn parse_events(
    path: &Path,
    taxonomy: &Taxonomy,
    options: &ParseOptions,
) -> Result<ParseOutcome, IngestError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_lowercase();
    if ext == "jsonl" || ext == "ndjson" {
        parse_events_jsonl(path, taxonomy, options)
    } else {
        parse_events_csv(path, taxonomy, options)
    }
}

fn validate_row(
    line: usize,
    date: &str,
    feature: &str,
    activity: &str,
    user: &str,
    count: Option<&str>,
    taxonomy: &Taxonomy,
    options: &ParseOptions,
    out: &mut ParseOutcome,
) -> Result<(), IngestError> {
    let reject = |reason: String, out: &mut ParseOutcome| -> Result<(), IngestError> {
        match options.policy {
            UnknownTermPolicy::Skip => {
                out.warnings.push(ParseWarning { line, reason });
                Ok(())
            }
            UnknownTermPolicy::Strict => Err(IngestError::Row { line, reason }),
        }
    };

    let date = match NaiveDate::parse_from_str(date.trim(), "%Y-%m-%d") {
        Ok(d) => d,
        // A malformed date is a format error, not a repertoire mismatch:
        // always hard-fail.
        Err(e) => {
            return Err(IngestError::Row {
                line,
                reason: format!("malformed date {date:?}: {e}"),
            })
        }
    };
    let count = match count {
        None => 1,
        Some(raw) => match raw.trim().parse::<i64>() {
            Ok(n) if n >= 1 => n as u64,
            Ok(n) => {
                return Err(IngestError::Row {
                    line,
                    reason: format!("count must be >= 1, got {n}"),
                })
            }
            Err(e) => {
                return Err(IngestError::Row {
                    line,
                    reason: format!("malformed count {raw:?}: {e}"),
                })
            }
        },
    };
    if let Some(window) = options.window {
        if !window.contains(date) {
            return reject(format!("date {date} outside window {window}"), out);
        }
    }
    let feature = feature.trim().to_lowercase();
    let activity = activity.trim().to_lowercase();
    let user = user.trim().to_string();
    if taxonomy.class_of(NodeKind::Feature, &feature).is_none() {
        return reject(format!("unknown feature term {feature:?}"), out);
    }
    if taxonomy.class_of(NodeKind::Activity, &activity).is_none() {
        return reject(format!("unknown activity term {activity:?}"), out);
    }
    if user.is_empty() {
        return reject("empty user pseudonym".into(), out);
    }
    out.records.push(EventRecord {
        date,
        feature,
        activity,
        user,
        count,
    });
    Ok(())
}

fn parse_events_csv(
    path: &Path,
    taxonomy: &Taxonomy,
    options: &ParseOptions,
) -> Result<ParseOutcome, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| IngestError::Format(e.to_string()))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (date_c, feat_c, act_c, user_c) = match (
        col("date"),
        col("feature"),
        col("activity"),
        col("user"),
    ) {
        (Some(d), Some(f), Some(a), Some(u)) => (d, f, a, u),
        _ => {
            return Err(IngestError::Format(format!(
                "event header must contain date,feature,activity,user (got {:?})",
                headers.iter().collect::<Vec<_>>()
            )))
        }
    };
    let count_c = col("count");

    let mut out = ParseOutcome::default();
    for (idx, row) in reader.records().enumerate() {
        let line = idx + 2;
        let row = row.map_err(|e| IngestError::Row {
            line,
            reason: e.to_string(),
        })?;
        let field = |c: usize| row.get(c).unwrap_or("");
        validate_row(
            line,
            field(date_c),
            field(feat_c),
            field(act_c),
            field(user_c),
            count_c.map(|c| field(c)).filter(|s| !s.is_empty()),
            taxonomy,
            options,
            &mut out,
        )?;
    }
    Ok(out)
}

#[derive(Deserialize)]
struct JsonRow {
    date: String,
    feature: String,
    activity: String,
    user: String,
    count: Option<i64>,
}

fn parse_events_jsonl(
    path: &Path,
    taxonomy: &Taxonomy,
    options: &ParseOptions,
) -> Result<ParseOutcome, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut out = ParseOutcome::default();
    for (idx, line_text) in reader.lines().enumerate() {
        let line = idx + 1;
        let line_text = line_text.map_err(|e| IngestError::Row {
            line,
            reason: e.to_string(),
        })?;
        if line_text.trim().is_empty() {
            continue;
        }
        let row: JsonRow = serde_json::from_str(&line_text).map_err(|e| IngestError::Row {
            line,
            reason: e.to_string(),
        })?;
        let count_text = row.count.map(|c| c.to_string());
        validate_row(
            line,
            &row.date,
            &row.feature,
            &row.activity,
            &row.user,
            count_text.as_deref(),
            taxonomy,
            options,
            &mut out,
        )?;
    }
    Ok(out)
}

/// Whether counts are kept at term resolution or pooled into classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grouping {
    Full,
    Grouped,
}

impl fmt::Display for Grouping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Grouping::Full => write!(f, "full"),
            Grouping::Grouped => write!(f, "grouped"),
        }
    }
}

/// Dense nonnegative counts indexed (feature, activity, day). The day axis
/// is contiguous calendar days over the window; silent days are explicit
/// zero slices so downstream spectral analysis sees a regular grid.
#[derive(Debug, Clone)]
pub struct DailyCounts {
    features: Vec<String>,
    activities: Vec<String>,
    window: DayRange,
    grouping: Grouping,
    counts: Array3<u64>,
}

impl DailyCounts {
    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn activities(&self) -> &[String] {
        &self.activities
    }

    pub fn window(&self) -> DayRange {
        self.window
    }

    pub fn grouping(&self) -> Grouping {
        self.grouping
    }

    pub fn counts(&self) -> &Array3<u64> {
        &self.counts
    }

    pub fn num_days(&self) -> usize {
        self.counts.len_of(Axis(2))
    }

    pub fn total(&self) -> u64 {
        self.counts.sum()
    }

    pub fn feature_index(&self, label: &str) -> Option<usize> {
        self.features.iter().position(|f| f == label)
    }

    pub fn activity_index(&self, label: &str) -> Option<usize> {
        self.activities.iter().position(|a| a == label)
    }

    /// Counts for one day as a (feature x activity) view.
    pub fn day_slice(&self, day_index: usize) -> ArrayView2<'_, u64> {
        self.counts.index_axis(Axis(2), day_index)
    }

    /// Daily totals summed over all cells.
    pub fn total_series(&self) -> crate::spectral::TimeSeries {
        let values = (0..self.num_days())
            .map(|d| self.day_slice(d).iter().map(|&c| c as f64).sum())
            .collect();
        crate::spectral::TimeSeries::new(self.window.start, values)
    }

    /// Daily series of one cell, by axis labels.
    pub fn cell_series(
        &self,
        feature: &str,
        activity: &str,
    ) -> Option<crate::spectral::TimeSeries> {
        let f = self.feature_index(feature)?;
        let a = self.activity_index(activity)?;
        let values = (0..self.num_days())
            .map(|d| self.counts[[f, a, d]] as f64)
            .collect();
        Some(crate::spectral::TimeSeries::new(self.window.start, values))
    }

    /// Elementwise sum of two aggregations over identical axes.
    pub fn merge(&self, other: &DailyCounts) -> Result<DailyCounts, IngestError> {
        if self.features != other.features
            || self.activities != other.activities
            || self.window != other.window
        {
            return Err(IngestError::Format(
                "cannot merge counts with different axes".into(),
            ));
        }
        let mut counts = self.counts.clone();
        counts += &other.counts;
        Ok(DailyCounts {
            features: self.features.clone(),
            activities: self.activities.clone(),
            window: self.window,
            grouping: self.grouping,
            counts,
        })
    }
}

/// Fold validated records into daily counts on the requested axes.
///
/// `counts[f, a, d]` sums record counts over matching cells; pooling by
/// class conserves total mass. Records outside the window are ignored
/// (parsing already policy-checks them when a window is configured).
pub fn aggregate(
    records: &[EventRecord],
    taxonomy: &Taxonomy,
    grouping: Grouping,
    window: DayRange,
) -> Result<DailyCounts, IngestError> {
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
    if features.is_empty() || activities.is_empty() {
        return Err(IngestError::Taxonomy("empty repertoire".into()));
    }
    let feature_index: BTreeMap<&str, usize> = features
        .iter()
        .enumerate()
        .map(|(i, f)| (f.as_str(), i))
        .collect();
    let activity_index: BTreeMap<&str, usize> = activities
        .iter()
        .enumerate()
        .map(|(i, a)| (a.as_str(), i))
        .collect();

    let mut counts = Array3::<u64>::zeros((features.len(), activities.len(), window.len()));
    for record in records {
        let Some(d) = window.index_of(record.date) else {
            continue;
        };
        let (f_label, a_label) = match grouping {
            Grouping::Full => (record.feature.as_str(), record.activity.as_str()),
            Grouping::Grouped => {
                let f = taxonomy
                    .class_of(NodeKind::Feature, &record.feature)
                    .ok_or_else(|| {
                        IngestError::Taxonomy(format!("unmapped feature {:?}", record.feature))
                    })?;
                let a = taxonomy
                    .class_of(NodeKind::Activity, &record.activity)
                    .ok_or_else(|| {
                        IngestError::Taxonomy(format!("unmapped activity {:?}", record.activity))
                    })?;
                (f, a)
            }
        };
        let f = *feature_index.get(f_label).ok_or_else(|| {
            IngestError::Taxonomy(format!("feature {f_label:?} missing from axis"))
        })?;
        let a = *activity_index.get(a_label).ok_or_else(|| {
            IngestError::Taxonomy(format!("activity {a_label:?} missing from axis"))
        })?;
        counts[[f, a, d]] += record.count;
    }

    Ok(DailyCounts {
        features,
        activities,
        window,
        grouping,
        counts,
    })
}
